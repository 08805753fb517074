//! One party's share of a secret tensor.
//!
//! Operations here are local: they need no communication and no knowledge
//! of the party's rank. Anything involving public constants or other
//! parties lives on [`Party`](crate::Party).

use crate::error::{Error, Result};
use crate::ring::{FixedPointEncoder, RingTensor};

/// Additive share: the shares of all parties sum to the encoded secret
/// modulo 2^64.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithShare {
    share: RingTensor,
    encoder: FixedPointEncoder,
}

/// XOR share: 64 independently shared bits per element.
///
/// The encoder records the fixed-point scale of the value the bits came
/// from, so converting back preserves it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinShare {
    share: RingTensor,
    encoder: FixedPointEncoder,
}

fn check_scale(a: FixedPointEncoder, b: FixedPointEncoder) -> Result<()> {
    if a != b {
        return Err(Error::ScaleMismatch {
            lhs: a.precision_bits(),
            rhs: b.precision_bits(),
        });
    }
    Ok(())
}

impl ArithShare {
    pub fn new(share: RingTensor, encoder: FixedPointEncoder) -> Self {
        ArithShare { share, encoder }
    }

    pub fn share(&self) -> &RingTensor {
        &self.share
    }

    pub fn into_share(self) -> RingTensor {
        self.share
    }

    pub fn encoder(&self) -> FixedPointEncoder {
        self.encoder
    }

    pub fn precision_bits(&self) -> u32 {
        self.encoder.precision_bits()
    }

    pub fn dims(&self) -> &[usize] {
        self.share.dims()
    }

    pub fn len(&self) -> usize {
        self.share.len()
    }

    pub fn is_empty(&self) -> bool {
        self.share.is_empty()
    }

    /// Same share, reinterpreted at another scale.
    pub fn with_encoder(self, encoder: FixedPointEncoder) -> Self {
        ArithShare { encoder, ..self }
    }

    pub fn add(&self, other: &ArithShare) -> Result<Self> {
        check_scale(self.encoder, other.encoder)?;
        Ok(ArithShare::new(self.share.add(&other.share)?, self.encoder))
    }

    pub fn sub(&self, other: &ArithShare) -> Result<Self> {
        check_scale(self.encoder, other.encoder)?;
        Ok(ArithShare::new(self.share.sub(&other.share)?, self.encoder))
    }

    pub fn neg(&self) -> Self {
        ArithShare::new(self.share.neg(), self.encoder)
    }

    /// Multiplies by a public integer; the scale is unchanged.
    pub fn mul_int(&self, k: i64) -> Self {
        ArithShare::new(self.share.scale(k as u64), self.encoder)
    }

    /// The same value at `bits` more fractional bits (exact, local).
    pub fn widen(&self, bits: u32) -> Self {
        let enc = FixedPointEncoder::new(self.encoder.precision_bits() + bits);
        ArithShare::new(self.share.scale(1u64 << bits), enc)
    }

    pub fn map_share(&self, f: impl FnOnce(&RingTensor) -> Result<RingTensor>) -> Result<Self> {
        Ok(ArithShare::new(f(&self.share)?, self.encoder))
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        self.map_share(|s| s.reshape(dims))
    }

    pub fn transpose(&self) -> Result<Self> {
        self.map_share(|s| s.transpose())
    }

    pub fn sum_last(&self) -> Self {
        ArithShare::new(self.share.sum_last(), self.encoder)
    }

    pub fn cumsum_last(&self) -> Self {
        ArithShare::new(self.share.cumsum_last(), self.encoder)
    }

    pub fn repeat_last(&self, n: usize) -> Self {
        ArithShare::new(self.share.repeat_last(n), self.encoder)
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        self.map_share(|s| s.slice_rows(start, end))
    }

    /// Concatenates along the leading dimension.
    pub fn cat0(parts: &[&ArithShare]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        for p in parts {
            check_scale(first.encoder, p.encoder)?;
        }
        let shares: Vec<&RingTensor> = parts.iter().map(|p| &p.share).collect();
        Ok(ArithShare::new(RingTensor::cat0(&shares)?, first.encoder))
    }
}

impl BinShare {
    pub fn new(share: RingTensor, encoder: FixedPointEncoder) -> Self {
        BinShare { share, encoder }
    }

    pub fn share(&self) -> &RingTensor {
        &self.share
    }

    pub fn into_share(self) -> RingTensor {
        self.share
    }

    pub fn encoder(&self) -> FixedPointEncoder {
        self.encoder
    }

    pub fn dims(&self) -> &[usize] {
        self.share.dims()
    }

    pub fn len(&self) -> usize {
        self.share.len()
    }

    pub fn is_empty(&self) -> bool {
        self.share.is_empty()
    }

    pub fn xor(&self, other: &BinShare) -> Result<Self> {
        Ok(BinShare::new(self.share.xor(&other.share)?, self.encoder))
    }

    /// Logical right shift with zero fill.
    pub fn shr(&self, k: u32) -> Self {
        BinShare::new(self.share.map(|w| w.checked_shr(k).unwrap_or(0)), self.encoder)
    }

    pub fn shl(&self, k: u32) -> Self {
        BinShare::new(self.share.map(|w| w.checked_shl(k).unwrap_or(0)), self.encoder)
    }

    /// Bitwise AND with a public mask (local).
    pub fn mask(&self, mask: u64) -> Self {
        BinShare::new(self.share.map(|w| w & mask), self.encoder)
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        Ok(BinShare::new(self.share.reshape(dims)?, self.encoder))
    }
}
