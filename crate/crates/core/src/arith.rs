//! Arithmetic sharing: input, output, linear operations, Beaver products and
//! truncation.

use crate::dealer::{BeaverTriple, Request, SquarePair, TripleOp, WrapPair};
use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{fixed::round_div, Conv2dParams, FixedPointEncoder, RingTensor};
use crate::shares::ArithShare;

/// `round(2^64 / divisor) mod 2^64`.
fn ring_over(divisor: u64) -> u64 {
    (((1u128 << 64) + divisor as u128 / 2) / divisor as u128) as u64
}

/// Which bilinear map a Beaver product evaluates.
#[derive(Clone, Copy)]
enum Bilinear {
    Mul,
    MatMul,
    Conv2d(Conv2dParams),
}

impl Bilinear {
    fn apply(self, lhs: &RingTensor, rhs: &RingTensor) -> Result<RingTensor> {
        match self {
            Bilinear::Mul => lhs.mul(rhs),
            Bilinear::MatMul => lhs.matmul(rhs),
            Bilinear::Conv2d(p) => lhs.conv2d(rhs, p),
        }
    }

    fn triple_op(self) -> TripleOp {
        match self {
            Bilinear::Mul => TripleOp::Mul,
            Bilinear::MatMul => TripleOp::MatMul,
            Bilinear::Conv2d(p) => TripleOp::Conv2d(p),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Bilinear::Mul => "mul",
            Bilinear::MatMul => "matmul",
            Bilinear::Conv2d(_) => "conv2d",
        }
    }
}

impl Party {
    /// Secret-shares `value` held by `src`. Other parties pass `None`; the
    /// shape is broadcast by `src` (1 round when there are several parties).
    pub fn share(
        &mut self,
        src: usize,
        value: Option<&RingTensor>,
        encoder: FixedPointEncoder,
    ) -> Result<ArithShare> {
        let n = self.world_size();
        if src >= n {
            return Err(Error::InvalidSrc { src, world_size: n });
        }
        let is_src = self.rank() == src;
        if is_src && value.is_none() {
            return Err(Error::Config("the source party must supply a value".into()));
        }
        self.op("share", |p| {
            let dims: Vec<usize> = if n == 1 {
                value.expect("checked").dims().to_vec()
            } else {
                let local = value.map(|v| {
                    RingTensor::from_vec(v.dims().iter().map(|&d| d as u64).collect())
                });
                let got = p.session_mut().broadcast(src, local.as_ref())?;
                got.data().iter().map(|&d| d as usize).collect()
            };
            let mut share = p.przs().zero_share(&dims);
            if is_src {
                share.add_assign(value.expect("checked"))?;
            }
            Ok(ArithShare::new(share, encoder))
        })
    }

    /// Encodes with the party's precision and shares from `src`.
    pub fn share_f64(
        &mut self,
        src: usize,
        value: Option<(&[usize], &[f64])>,
    ) -> Result<ArithShare> {
        let enc = self.encoder();
        let encoded = match value {
            Some((dims, v)) if self.rank() == src => Some(enc.encode_tensor(dims, v)?),
            _ => None,
        };
        self.share(src, encoded.as_ref(), enc)
    }

    /// A public tensor as a sharing: rank 0 holds the value, others zero.
    pub fn public(&self, value: &RingTensor, encoder: FixedPointEncoder) -> ArithShare {
        let share = if self.rank() == 0 {
            value.clone()
        } else {
            RingTensor::zeros(value.dims())
        };
        ArithShare::new(share, encoder)
    }

    pub fn public_f64(&self, dims: &[usize], values: &[f64]) -> Result<ArithShare> {
        let enc = self.encoder();
        Ok(self.public(&enc.encode_tensor(dims, values)?, enc))
    }

    /// Sum of all shares (1 round).
    pub fn reveal(&mut self, x: &ArithShare) -> Result<RingTensor> {
        self.op("reveal", |p| p.session_mut().all_reduce_sum(x.share()))
    }

    pub fn reveal_f64(&mut self, x: &ArithShare) -> Result<Vec<f64>> {
        let t = self.reveal(x)?;
        Ok(x.encoder().decode_tensor(&t))
    }

    /// Adds an already encoded public tensor (rank 0 only; 0 rounds).
    pub fn add_public(&self, x: &ArithShare, value: &RingTensor) -> Result<ArithShare> {
        if self.rank() == 0 {
            x.map_share(|s| s.add(value))
        } else if value.dims() != x.dims() {
            Err(Error::shape(format!("{:?} vs {:?}", x.dims(), value.dims())))
        } else {
            Ok(x.clone())
        }
    }

    /// Adds the real constant `c` to every element.
    pub fn add_const(&self, x: &ArithShare, c: f64) -> Result<ArithShare> {
        let e = x.encoder().encode(c)?;
        Ok(self.add_public(x, &RingTensor::filled(x.dims(), e.0))?)
    }

    /// `c - x` for a real constant `c`.
    pub fn rsub_const(&self, c: f64, x: &ArithShare) -> Result<ArithShare> {
        self.add_const(&x.neg(), c)
    }

    /// Multiplies by a real constant: encodes `c` at the party precision and
    /// truncates afterwards.
    pub fn mul_const(&mut self, x: &ArithShare, c: f64) -> Result<ArithShare> {
        let bits = self.config().precision_bits;
        let k = FixedPointEncoder::new(bits).encode(c)?;
        let scaled = ArithShare::new(x.share().scale(k.0), x.encoder());
        self.truncate(&scaled, bits)
    }

    /// Elementwise product (1 Beaver round plus truncation).
    pub fn mul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.beaver(x, y, Bilinear::Mul)
    }

    pub fn matmul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.beaver(x, y, Bilinear::MatMul)
    }

    /// Convolution of input `[N, C, H, W]` with weight `[O, C, KH, KW]`.
    pub fn conv2d(
        &mut self,
        x: &ArithShare,
        weight: &ArithShare,
        params: Conv2dParams,
    ) -> Result<ArithShare> {
        self.beaver(x, weight, Bilinear::Conv2d(params))
    }

    fn beaver(&mut self, x: &ArithShare, y: &ArithShare, f: Bilinear) -> Result<ArithShare> {
        self.op(f.name(), |p| {
            let raw = p.beaver_raw(x.share(), y.share(), f)?;
            p.rescale_product(raw, x.encoder(), y.encoder())
        })
    }

    /// `f(x, y)` in the ring with no rescaling.
    fn beaver_raw(&mut self, x: &RingTensor, y: &RingTensor, f: Bilinear) -> Result<RingTensor> {
        let request = Request::Triple {
            op: f.triple_op(),
            lhs: x.dims().to_vec(),
            rhs: y.dims().to_vec(),
        };
        let t = BeaverTriple::from_parts(self.fetch(request)?);
        let eps_local = x.sub(&t.a)?;
        let delta_local = y.sub(&t.b)?;
        let both = RingTensor::concat_flat(&[&eps_local, &delta_local]);
        let opened = self.op("beaver_open", |p| p.session_mut().all_reduce_sum(&both))?;
        let parts = opened.split_flat(&[x.dims(), y.dims()])?;
        let (eps, delta) = (&parts[0], &parts[1]);
        let mut z = t.c;
        z.add_assign(&f.apply(eps, &t.b)?)?;
        z.add_assign(&f.apply(&t.a, delta)?)?;
        if self.rank() == 0 {
            z.add_assign(&f.apply(eps, delta)?)?;
        }
        Ok(z)
    }

    /// Brings a raw product of operands at scales `ex` and `ey` back to the
    /// larger of the two. Products with an integer operand need no division.
    fn rescale_product(
        &mut self,
        raw: RingTensor,
        ex: FixedPointEncoder,
        ey: FixedPointEncoder,
    ) -> Result<ArithShare> {
        let out = if ex.precision_bits() >= ey.precision_bits() { ex } else { ey };
        let drop = ex.precision_bits().min(ey.precision_bits());
        let product = ArithShare::new(raw, out);
        if drop == 0 {
            Ok(product)
        } else {
            self.truncate(&product, drop)
        }
    }

    /// `x * x` using a square pair (1 round plus truncation).
    pub fn square(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("square", |p| {
            let pair = SquarePair::from_parts(p.fetch(Request::Square {
                dims: x.dims().to_vec(),
            })?);
            let eps_local = x.share().sub(&pair.a)?;
            let eps = p.op("beaver_open", |p| p.session_mut().all_reduce_sum(&eps_local))?;
            // b + 2 eps a + eps^2
            let mut z = pair.b;
            z.add_assign(&eps.mul(&pair.a)?.scale(2))?;
            if p.rank() == 0 {
                z.add_assign(&eps.mul(&eps)?)?;
            }
            p.rescale_product(z, x.encoder(), x.encoder())
        })
    }

    /// Shares of the wrap count of `x`'s shares: `(sum of signed shares -
    /// signed x) / 2^64`, as an integer-scale sharing (1 round).
    ///
    /// The correction for `x + r` itself overflowing is skipped, so the
    /// result is off by one with probability about `|x| / 2^64`.
    pub fn compute_wraps(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("compute_wraps", |p| {
            let pair = WrapPair::from_parts(p.fetch(Request::WrapPair {
                dims: x.dims().to_vec(),
            })?);
            let z_local = x.share().add(&pair.r)?;
            // Local signed overflow of x_p + r_p.
            let beta = x.share().zip_with(&pair.r, |xs, rs| {
                let exact = xs as i64 as i128 + rs as i64 as i128;
                ((exact - xs.wrapping_add(rs) as i64 as i128) >> 64) as u64
            })?;
            let parts = p.op("reveal_masked", |p| p.session_mut().all_gather(&z_local))?;
            let mut z = RingTensor::zeros(x.dims());
            for part in &parts {
                z.add_assign(part)?;
            }
            let theta_z = RingTensor::new(
                x.dims().to_vec(),
                (0..z.len())
                    .map(|i| {
                        crate::dealer::wrap_count(parts.iter().map(|s| s.data()[i]), z.data()[i])
                            as u64
                    })
                    .collect(),
            )?;
            let mut theta = beta.sub(&pair.theta_r)?;
            if p.rank() == 0 {
                theta.add_assign(&theta_z)?;
            }
            Ok(ArithShare::new(theta, FixedPointEncoder::integer()))
        })
    }

    /// Divides by `2^bits`, lowering the scale is left to the caller: the
    /// result keeps `x`'s encoder.
    pub fn truncate(&mut self, x: &ArithShare, bits: u32) -> Result<ArithShare> {
        if bits == 0 {
            return Ok(x.clone());
        }
        self.op("truncate", |p| p.divide(x, 1u64 << bits))
    }

    /// Divides by a public positive integer; the scale is unchanged.
    pub fn div_public(&mut self, x: &ArithShare, divisor: u64) -> Result<ArithShare> {
        if divisor == 0 {
            return Err(Error::ZeroDivisor);
        }
        self.op("div_public", |p| p.divide(x, divisor))
    }

    fn divide(&mut self, x: &ArithShare, divisor: u64) -> Result<ArithShare> {
        let local = x.share().map(|s| round_div(s as i64, divisor) as u64);
        if self.world_size() <= 2 || divisor == 1 {
            return Ok(ArithShare::new(local, x.encoder()));
        }
        let theta = self.compute_wraps(x)?;
        let correction = theta.share().scale(ring_over(divisor));
        Ok(ArithShare::new(local.sub(&correction)?, x.encoder()))
    }
}
