use crate::error::{Error, Result};

use super::{RingElement, RingTensor};

/// Fractional bits used when nothing else is configured.
pub const DEFAULT_PRECISION_BITS: u32 = 16;

/// Maps reals to ring elements as `round(x * 2^precision_bits)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedPointEncoder {
    precision_bits: u32,
}

impl Default for FixedPointEncoder {
    fn default() -> Self {
        FixedPointEncoder::new(DEFAULT_PRECISION_BITS)
    }
}

impl FixedPointEncoder {
    /// # Panics
    ///
    /// If `precision_bits >= 63`.
    pub fn new(precision_bits: u32) -> Self {
        assert!(precision_bits < 63, "precision must leave room for a sign");
        FixedPointEncoder { precision_bits }
    }

    /// Encoder for plain integers (scale 1).
    pub fn integer() -> Self {
        FixedPointEncoder { precision_bits: 0 }
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn scale(&self) -> u64 {
        1u64 << self.precision_bits
    }

    /// Rounds half away from zero; fails when `|x| * scale >= 2^63`.
    pub fn encode(&self, x: f64) -> Result<RingElement> {
        let scaled = x * self.scale() as f64;
        // 2^63 is exactly representable, so this comparison is exact.
        if !scaled.is_finite() || scaled.abs() >= 9_223_372_036_854_775_808.0 {
            return Err(Error::EncodeOverflow {
                value: x,
                precision_bits: self.precision_bits,
            });
        }
        let rounded = scaled.round();
        if rounded.abs() >= 9_223_372_036_854_775_808.0 {
            return Err(Error::EncodeOverflow {
                value: x,
                precision_bits: self.precision_bits,
            });
        }
        Ok(RingElement::from_signed(rounded as i64))
    }

    pub fn decode(&self, v: RingElement) -> f64 {
        v.signed() as f64 / self.scale() as f64
    }

    pub fn encode_tensor(&self, dims: &[usize], values: &[f64]) -> Result<RingTensor> {
        let data = values
            .iter()
            .map(|&x| self.encode(x).map(|e| e.0))
            .collect::<Result<Vec<_>>>()?;
        RingTensor::new(dims.to_vec(), data)
    }

    pub fn decode_tensor(&self, t: &RingTensor) -> Vec<f64> {
        t.data().iter().map(|&v| self.decode(RingElement(v))).collect()
    }
}

/// Signed division rounding half away from zero. Used for local share
/// division during truncation, so that `round_div(-v, d) == -round_div(v, d)`.
pub(crate) fn round_div(value: i64, divisor: u64) -> i64 {
    let v = value as i128;
    let d = divisor as i128;
    let q = (v.abs() + d / 2) / d;
    (if v < 0 { -q } else { q }) as i64
}
