//! Secret-shared random samples.
//!
//! Randomness comes from every party's private generator: each party XORs
//! in its own bits, so a sample is uniform as long as one party is honest,
//! and no single party can predict it.

use std::f64::consts::PI;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{FixedPointEncoder, RingTensor};
use crate::shares::{ArithShare, BinShare};

impl Party {
    fn local_bits(&mut self, dims: &[usize], bits: u32) -> BinShare {
        let n: usize = dims.iter().product();
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        let rng = self.rng();
        let words: Vec<u64> = (0..n).map(|_| rng.next_u64() & mask).collect();
        BinShare::new(
            RingTensor::new(dims.to_vec(), words).expect("length matches dims"),
            FixedPointEncoder::integer(),
        )
    }

    /// Uniform samples on `[0, 1)` in multiples of `2^-precision` (1 round).
    pub fn rand_uniform(&mut self, dims: &[usize]) -> Result<ArithShare> {
        let enc = self.encoder();
        self.op("rand_uniform", |p| {
            let bits = p.local_bits(dims, enc.precision_bits());
            let u = p.b2a_bits(&bits, enc.precision_bits())?;
            Ok(u.with_encoder(enc))
        })
    }

    /// Uniform random bits at integer scale (1 round).
    pub fn rand_bits(&mut self, dims: &[usize]) -> Result<ArithShare> {
        self.op("rand_bits", |p| {
            let bits = p.local_bits(dims, 1);
            p.bit_b2a(&bits)
        })
    }

    /// Bits that are 1 with probability `p` (quantized to the encoder grid),
    /// as `[u < p]`.
    pub fn bernoulli(&mut self, prob: f64, dims: &[usize]) -> Result<ArithShare> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Config(format!("probability {prob} outside [0, 1]")));
        }
        self.op("bernoulli", |p| {
            let u = p.rand_uniform(dims)?;
            let shifted = p.add_const(&u, -prob)?;
            p.ltz(&shifted)
        })
    }

    /// Normal samples by the Box-Muller transform.
    ///
    /// The angle is drawn from `[-pi, pi)` rather than `[0, 2 pi)`, where the
    /// trigonometric approximation is accurate; this flips the sign of both
    /// outputs, which leaves the distribution unchanged. `1 - u` keeps the
    /// logarithm's argument in `(0, 1]`.
    pub fn gaussian(&mut self, mu: f64, sigma: f64, dims: &[usize]) -> Result<ArithShare> {
        self.op("gaussian", |p| {
            let n: usize = dims.iter().product();
            let half = n.div_ceil(2).max(1);
            let u = p.rand_uniform(&[2 * half])?;
            let u1 = u.slice_rows(0, half)?;
            let u2 = u.slice_rows(half, 2 * half)?;
            let l = p.log(&p.rsub_const(1.0, &u1)?)?;
            let r = p.sqrt(&l.mul_int(-2))?;
            let turn = p.mul_const(&u2, 2.0 * PI)?;
            let angle = p.add_const(&turn, -PI)?;
            let (c, s) = p.cos_sin(&angle)?;
            let radius = ArithShare::cat0(&[&r, &r])?;
            let z = p.mul(&radius, &ArithShare::cat0(&[&c, &s])?)?;
            let z = z.slice_rows(0, n)?.reshape(dims)?;
            let scaled = p.mul_const(&z, sigma)?;
            p.add_const(&scaled, mu)
        })
    }

    /// Exponential samples with rate `lambda` by inverting the CDF:
    /// `-ln(1 - u) / lambda`.
    pub fn exponential(&mut self, lambda: f64, dims: &[usize]) -> Result<ArithShare> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("rate {lambda} must be positive")));
        }
        self.op("exponential", |p| {
            let u = p.rand_uniform(dims)?;
            let l = p.log(&p.rsub_const(1.0, &u)?)?;
            let x = p.mul_const(&l, -1.0 / lambda)?;
            // ln(1) may come out a unit below zero; clamp to the support.
            p.relu(&x)
        })
    }

    /// Laplace samples: an exponential magnitude with mean `scale` and a
    /// uniformly random sign.
    pub fn laplace(&mut self, mu: f64, scale: f64, dims: &[usize]) -> Result<ArithShare> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!("scale {scale} must be positive")));
        }
        self.op("laplace", |p| {
            let x = p.exponential(1.0 / scale, dims)?;
            let bit = p.rand_bits(dims)?;
            let minus_one = RingTensor::filled(dims, u64::MAX);
            let sign = p.add_public(&bit.mul_int(2), &minus_one)?;
            let y = p.mul(&x, &sign)?;
            p.add_const(&y, mu)
        })
    }

    /// Picks one element of each row of `values` with probability
    /// proportional to `weights` (non-negative, not all zero).
    ///
    /// A uniform threshold `r = u * sum(w)` is compared against the running
    /// sums `c_i`; `m_i = [c_i > r]` is a step, and differencing it against a
    /// prepended zero gives the one-hot selection. The comparison is made
    /// before truncation, `c_i * 2^f` (with `f` the precision of `u`)
    /// against the raw product `u * sum(w)`, so rounding never pushes `r`
    /// past the last running sum.
    pub fn weighted_sample(&mut self, values: &ArithShare, weights: &ArithShare) -> Result<ArithShare> {
        if values.dims() != weights.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", values.dims(), weights.dims())));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.op("weighted_sample", |p| {
            let (rows, n) = weights.share().rows_cols();
            let c = weights.cumsum_last();
            let total = weights.sum_last();
            let u = p.rand_uniform(&[rows])?;
            let prec = u.precision_bits();
            let r = p.mul_by_int_raw(u.share(), total.share())?;
            let threshold = ArithShare::new(r, weights.encoder()).repeat_last(n);
            let scaled_c = c.mul_int(1i64 << prec).reshape(threshold.dims())?;
            let step = p.ltz(&threshold.sub(&scaled_c)?)?;
            let prev = step.map_share(|s| {
                let mut data = Vec::with_capacity(s.len());
                for row in s.data().chunks(n) {
                    data.push(0);
                    data.extend_from_slice(&row[..n - 1]);
                }
                RingTensor::new(s.dims().to_vec(), data)
            })?;
            let onehot = step.sub(&prev)?.reshape(values.dims())?;
            Ok(p.mul(&onehot, values)?.sum_last())
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::party::{simulate, PartyConfig};

    #[test]
    fn uniform_lies_on_grid_in_unit_interval() {
        let out = simulate(3, 4, &PartyConfig::default(), |p| {
            let u = p.rand_uniform(&[200])?;
            p.reveal(&u)
        })
        .unwrap();
        assert_eq!(out[0], out[1]);
        assert!(out[0].data().iter().all(|&w| w < 1 << 16));
    }

    #[test]
    fn degenerate_weights_and_probabilities() {
        let out = simulate(2, 9, &PartyConfig::default(), |p| {
            let v = p.share_f64(0, Some((&[2, 3], &[7.0, 8.0, 9.0, -1.0, -2.0, -3.0])))?;
            let w = p.share_f64(0, Some((&[2, 3], &[1.0, 0.0, 0.0, 0.0, 0.0, 2.5])))?;
            let pick = p.weighted_sample(&v, &w)?;
            let zero = p.bernoulli(0.0, &[20])?;
            let one = p.bernoulli(1.0, &[20])?;
            Ok((p.reveal_f64(&pick)?, p.reveal(&zero)?, p.reveal(&one)?))
        })
        .unwrap();
        let (pick, zero, one) = &out[0];
        assert_eq!(pick, &vec![7.0, -3.0]);
        assert!(zero.data().iter().all(|&b| b == 0));
        assert!(one.data().iter().all(|&b| b == 1));
    }
}
