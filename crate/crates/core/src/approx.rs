//! Nonlinear functions on arithmetic shares, approximated with additions,
//! products and public constants only.
//!
//! Inputs outside an approximation's domain silently produce meaningless
//! values, because the parties cannot see them. Setting
//! [`PartyConfig::debug_domain`](crate::PartyConfig) reveals the relevant
//! intermediate values and fails with [`Error::DomainViolation`] instead.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{FixedPointEncoder, RingTensor};
use crate::shares::ArithShare;

/// Starting point of an iterative method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Initial {
    /// The method's built-in formula.
    Formula,
    /// A fixed public value.
    Constant(f64),
}

/// Iteration counts and initial values of the approximations.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxConfig {
    /// `n` in `exp(x) ~ (1 + x / 2^n)^(2^n)`.
    pub exp_iterations: u32,
    /// Squarings in the complex limit used by `sin`/`cos`.
    pub trig_iterations: u32,
    /// Extra fractional bits carried through the repeated squarings of
    /// `exp`, `sin` and `cos`. Every squaring doubles the relative error
    /// already present, so rounding at the working precision alone leaves
    /// hundreds of units of error after `2^n` powers.
    pub guard_bits: u32,
    /// Newton steps of `reciprocal`.
    pub recip_iterations: u32,
    /// Default formula `3 exp(0.5 - x) + 0.003`.
    pub recip_initial: Initial,
    /// Newton steps of `inv_sqrt`.
    pub sqrt_iterations: u32,
    /// Terms of the series inside each `log` step.
    pub log_order: u32,
    /// Outer `log` steps.
    pub log_iterations: u32,
    /// Default formula `x / 120 - 20 exp(-2x - 1) + 3`.
    pub log_initial: Initial,
    /// Highest index `K` of the `erf` Maclaurin series (`K + 1` terms).
    pub erf_terms: u32,
    /// Newton starting point for the reciprocal inside `sigmoid`.
    pub sigmoid_recip_initial: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            exp_iterations: 8,
            trig_iterations: 10,
            guard_bits: 4,
            recip_iterations: 10,
            recip_initial: Initial::Formula,
            sqrt_iterations: 3,
            log_order: 8,
            log_iterations: 3,
            log_initial: Initial::Formula,
            erf_terms: 8,
            sigmoid_recip_initial: 0.75,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("exp_iterations", self.exp_iterations),
            ("trig_iterations", self.trig_iterations),
            ("recip_iterations", self.recip_iterations),
            ("sqrt_iterations", self.sqrt_iterations),
            ("log_order", self.log_order),
            ("log_iterations", self.log_iterations),
            ("erf_terms", self.erf_terms),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.exp_iterations > 40 || self.trig_iterations > 40 {
            return Err(Error::Config("limit exponents above 40 are not supported".into()));
        }
        if self.guard_bits > 8 {
            return Err(Error::Config("at most 8 guard bits are supported".into()));
        }
        Ok(())
    }
}

impl Party {
    fn approx(&self) -> ApproxConfig {
        self.config().approx.clone()
    }

    /// With `debug_domain` set, reveals `x` and checks `ok` on every element.
    fn check_domain(&mut self, x: &ArithShare, what: &str, ok: impl Fn(f64) -> bool) -> Result<()> {
        if !self.config().debug_domain {
            return Ok(());
        }
        let values = self.reveal_f64(x)?;
        if let Some(bad) = values.iter().find(|&&v| !ok(v)) {
            return Err(Error::DomainViolation(format!("{what}: input {bad}")));
        }
        Ok(())
    }

    /// `sum_i c_i t_i` for public reals `c_i`, truncated once.
    pub fn weighted_sum(&mut self, terms: &[(&ArithShare, f64)]) -> Result<ArithShare> {
        let (first, _) = terms.first().ok_or(Error::EmptyInput)?;
        let bits = self.config().precision_bits;
        let enc = self.encoder();
        let mut acc = RingTensor::zeros(first.dims());
        for (t, c) in terms {
            if t.encoder() != first.encoder() {
                return Err(Error::ScaleMismatch {
                    lhs: first.precision_bits(),
                    rhs: t.precision_bits(),
                });
            }
            acc.add_assign(&t.share().scale(enc.encode(*c)?.0))?;
        }
        self.truncate(&ArithShare::new(acc, first.encoder()), bits)
    }

    /// `x / 2^n` at `guard` extra fractional bits.
    fn scaled_down(&mut self, x: &ArithShare, n: u32, guard: u32) -> Result<ArithShare> {
        let wide = FixedPointEncoder::new(x.precision_bits() + guard);
        let y = if guard >= n {
            x.mul_int(1 << (guard - n))
        } else {
            self.truncate(x, n - guard)?
        };
        Ok(y.with_encoder(wide))
    }

    /// `x * y` for operands `guard` bits finer than `out`, rounded to `out`.
    fn mul_narrowing(
        &mut self,
        x: &ArithShare,
        y: &ArithShare,
        out: FixedPointEncoder,
        guard: u32,
    ) -> Result<ArithShare> {
        if guard == 0 {
            return self.mul(x, y);
        }
        // Labelling both operands `out + 2 guard` makes the product drop
        // exactly `out + 2 guard` bits, leaving a raw value at scale `out`.
        let label = FixedPointEncoder::new(out.precision_bits() + 2 * guard);
        let z = self.mul(&x.clone().with_encoder(label), &y.clone().with_encoder(label))?;
        Ok(z.with_encoder(out))
    }

    /// `exp(x) ~ (1 + x / 2^n)^(2^n)`.
    ///
    /// The squarings run with `guard_bits` extra precision except the last
    /// two, whose operands may be large for positive `x`.
    pub fn exp(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let cfg = self.approx();
        let (n, guard) = (cfg.exp_iterations, cfg.guard_bits);
        let out = x.encoder();
        self.op("exp", |p| {
            let base = p.scaled_down(x, n, guard)?;
            let mut y = p.add_const(&base, 1.0)?;
            let wide_steps = n.saturating_sub(2);
            for k in 0..n {
                y = if k == wide_steps {
                    p.mul_narrowing(&y, &y, out, guard)?
                } else {
                    p.square(&y)?
                };
            }
            Ok(y)
        })
    }

    /// `(cos x, sin x)` as the real and imaginary part of
    /// `(1 + i x / 2^n)^(2^n)`, with `guard_bits` extra precision until the
    /// last squaring.
    pub fn cos_sin(&mut self, x: &ArithShare) -> Result<(ArithShare, ArithShare)> {
        let cfg = self.approx();
        let (n, guard) = (cfg.trig_iterations, cfg.guard_bits);
        let out = x.encoder();
        self.op("cos_sin", |p| {
            let mut im = p.scaled_down(x, n, guard)?;
            let wide = im.encoder();
            let mut re = p.public(&wide.encode_tensor(x.dims(), &vec![1.0; x.len()])?, wide);
            let m = x.len();
            for k in 0..n {
                // (a + bi)^2 = a^2 - b^2 + 2abi, products batched.
                let a = re.reshape(&[m])?;
                let b = im.reshape(&[m])?;
                let lhs = ArithShare::cat0(&[&a, &b, &a])?;
                let rhs = ArithShare::cat0(&[&a, &b, &b])?;
                let prod = if k + 1 == n {
                    p.mul_narrowing(&lhs, &rhs, out, guard)?
                } else {
                    p.mul(&lhs, &rhs)?
                };
                let aa = prod.slice_rows(0, m)?;
                let bb = prod.slice_rows(m, 2 * m)?;
                let ab = prod.slice_rows(2 * m, 3 * m)?;
                re = aa.sub(&bb)?.reshape(x.dims())?;
                im = ab.mul_int(2).reshape(x.dims())?;
            }
            Ok((re, im))
        })
    }

    pub fn cos(&mut self, x: &ArithShare) -> Result<ArithShare> {
        Ok(self.cos_sin(x)?.0)
    }

    pub fn sin(&mut self, x: &ArithShare) -> Result<ArithShare> {
        Ok(self.cos_sin(x)?.1)
    }

    /// Newton iteration `y <- y (2 - x y)` for positive `x`.
    pub fn reciprocal_positive(&mut self, x: &ArithShare, initial: Initial) -> Result<ArithShare> {
        let iters = self.approx().recip_iterations;
        self.op("reciprocal", |p| {
            p.check_domain(x, "reciprocal", |v| v > 0.0)?;
            let mut y = match initial {
                Initial::Formula => {
                    let e = p.exp(&p.rsub_const(0.5, x)?)?;
                    p.add_const(&e.mul_int(3), 0.003)?
                }
                Initial::Constant(c) => p
                    .public_f64(x.dims(), &vec![c; x.len()])?
                    .with_encoder(x.encoder()),
            };
            for _ in 0..iters {
                let xy = p.mul(x, &y)?;
                let err = p.rsub_const(2.0, &xy)?;
                y = p.mul(&y, &err)?;
            }
            Ok(y)
        })
    }

    /// `1 / x = sign(x) / |x|`.
    pub fn reciprocal(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let initial = self.approx().recip_initial;
        self.op("reciprocal", |p| {
            p.check_domain(x, "reciprocal", |v| v != 0.0)?;
            let s = p.sign(x)?;
            let a = p.mul(x, &s)?;
            let r = p.reciprocal_positive(&a, initial)?;
            p.mul(&r, &s)
        })
    }

    /// `x / y` for private `y`.
    pub fn div(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("div", |p| {
            let r = p.reciprocal(y)?;
            p.mul(x, &r)
        })
    }

    /// Newton iteration `y <- y (3 - x y^2) / 2` from
    /// `y0 = 2.2 exp(-(x/2 + 0.2)) + 0.2 - x / 1024`.
    pub fn inv_sqrt(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let iters = self.approx().sqrt_iterations;
        self.op("inv_sqrt", |p| {
            p.check_domain(x, "inv_sqrt", |v| v > 0.0)?;
            let half = p.truncate(x, 1)?;
            let e = p.exp(&p.add_const(&half, 0.2)?.neg())?;
            let mut y = p.mul_const(&e, 2.2)?;
            y = p.add_const(&y, 0.2)?;
            y = y.sub(&p.truncate(x, 10)?)?;
            for _ in 0..iters {
                let y2 = p.square(&y)?;
                let xy2 = p.mul(x, &y2)?;
                let err = p.rsub_const(3.0, &xy2)?;
                let next = p.mul(&y, &err)?;
                y = p.truncate(&next, 1)?;
            }
            Ok(y)
        })
    }

    /// `sqrt(x) = x * x^(-1/2)`.
    pub fn sqrt(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("sqrt", |p| {
            let r = p.inv_sqrt(x)?;
            p.mul(x, &r)
        })
    }

    /// `x / |x|` along the last dimension.
    pub fn normalize(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("normalize", |p| {
            let (_, n) = x.share().rows_cols();
            let sq = p.square(x)?.sum_last();
            p.check_domain(&sq, "normalize (squared norm)", |v| v > 0.0)?;
            let r = p.inv_sqrt(&sq)?;
            p.mul(x, &r.repeat_last(n).reshape(x.dims())?)
        })
    }

    /// Natural logarithm by Householder steps
    /// `y <- y - sum_{k=1..order} h^k / k` with `h = 1 - x exp(-y)`.
    pub fn log(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let cfg = self.approx();
        self.op("log", |p| {
            p.check_domain(x, "log", |v| v > 0.0)?;
            let mut y = match cfg.log_initial {
                Initial::Formula => {
                    let a = p.div_public(x, 120)?;
                    let arg = p.add_const(&x.mul_int(-2), -1.0)?;
                    let e = p.exp(&arg)?;
                    p.add_const(&a.sub(&e.mul_int(20))?, 3.0)?
                }
                Initial::Constant(c) => p
                    .public_f64(x.dims(), &vec![c; x.len()])?
                    .with_encoder(x.encoder()),
            };
            for _ in 0..cfg.log_iterations {
                let e = p.exp(&y.neg())?;
                let xe = p.mul(x, &e)?;
                let h = p.rsub_const(1.0, &xe)?;
                let mut powers = vec![h.clone()];
                for _ in 1..cfg.log_order {
                    let next = p.mul(powers.last().expect("non-empty"), &h)?;
                    powers.push(next);
                }
                let terms: Vec<(&ArithShare, f64)> = powers
                    .iter()
                    .enumerate()
                    .map(|(k, t)| (t, 1.0 / (k + 1) as f64))
                    .collect();
                let series = p.weighted_sum(&terms)?;
                y = y.sub(&series)?;
            }
            Ok(y)
        })
    }

    /// `x^k` for a public non-negative integer, by repeated squaring.
    pub fn pow_int(&mut self, x: &ArithShare, k: u32) -> Result<ArithShare> {
        self.op("pow", |p| {
            if k == 0 {
                return Ok(p
                    .public_f64(x.dims(), &vec![1.0; x.len()])?
                    .with_encoder(x.encoder()));
            }
            let mut result: Option<ArithShare> = None;
            let mut base = x.clone();
            let mut rest = k;
            loop {
                if rest & 1 == 1 {
                    result = Some(match result {
                        None => base.clone(),
                        Some(r) => p.mul(&r, &base)?,
                    });
                }
                rest >>= 1;
                if rest == 0 {
                    break;
                }
                base = p.square(&base)?;
            }
            Ok(result.expect("k > 0"))
        })
    }

    /// `x^y` for a public exponent: repeated squaring for non-negative
    /// integers, otherwise `exp(y ln x)` (positive `x` only).
    pub fn pow_public(&mut self, x: &ArithShare, y: f64) -> Result<ArithShare> {
        if y >= 0.0 && y.fract() == 0.0 && y <= u32::MAX as f64 {
            return self.pow_int(x, y as u32);
        }
        self.op("pow", |p| {
            let l = p.log(x)?;
            let yl = p.mul_const(&l, y)?;
            p.exp(&yl)
        })
    }

    /// `x^y = exp(y ln x)` for private `y` and positive `x`.
    pub fn pow(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("pow", |p| {
            let l = p.log(x)?;
            let yl = p.mul(y, &l)?;
            p.exp(&yl)
        })
    }

    /// Logistic function evaluated on `|x|` and mirrored:
    /// `sigma(|x|) = 1 / (1 + exp(-|x|))` by Newton from a constant start,
    /// `sigma(-x) = 1 - sigma(x)`.
    pub fn sigmoid(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let start = self.approx().sigmoid_recip_initial;
        self.op("sigmoid", |p| {
            let pos = p.ltz(&x.neg())?;
            let sign = p.add_public(&pos.mul_int(2), &RingTensor::filled(x.dims(), u64::MAX))?;
            let a = p.mul(x, &sign)?;
            let e = p.exp(&a.neg())?;
            let d = p.add_const(&e, 1.0)?;
            let r = p.reciprocal_positive(&d, Initial::Constant(start))?;
            // pos ? r : 1 - r
            let flip = p.add_const(&r.mul_int(2), -1.0)?;
            let chosen = p.mul(&pos, &flip)?;
            p.add_const(&chosen.sub(&r)?, 1.0)
        })
    }

    /// `tanh(x) = 2 sigmoid(2x) - 1`.
    pub fn tanh(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("tanh", |p| {
            let s = p.sigmoid(&x.mul_int(2))?;
            p.add_const(&s.mul_int(2), -1.0)
        })
    }

    /// Maclaurin series `2/sqrt(pi) sum_{k=0..K} (-1)^k x^(2k+1) / (k! (2k+1))`.
    /// Accurate for `|x| <= 1`; degrades quickly beyond.
    pub fn erf(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let k_max = self.approx().erf_terms;
        self.op("erf", |p| {
            let x2 = p.square(x)?;
            let mut powers = vec![x.clone()];
            for _ in 0..k_max {
                let next = p.mul(powers.last().expect("non-empty"), &x2)?;
                powers.push(next);
            }
            let coeffs = erf_coefficients(k_max);
            let terms: Vec<(&ArithShare, f64)> = powers.iter().zip(coeffs).collect();
            p.weighted_sum(&terms)
        })
    }

    /// `exp(x - max x) / sum exp(x - max x)` along the last dimension.
    pub fn softmax(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("softmax", |p| {
            let (e, total) = p.shifted_exp(x)?;
            let (_, n) = x.share().rows_cols();
            let r = p.reciprocal_positive(&total, Initial::Formula)?;
            p.mul(&e, &r.repeat_last(n).reshape(x.dims())?)
        })
    }

    /// `x - max x - ln(sum exp(x - max x))` along the last dimension.
    pub fn log_softmax(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("log_softmax", |p| {
            let shifted = p.shift_by_max(x)?;
            let e = p.exp(&shifted)?;
            let (_, n) = x.share().rows_cols();
            let l = p.log(&e.sum_last())?;
            shifted.sub(&l.repeat_last(n).reshape(x.dims())?)
        })
    }

    fn shift_by_max(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let method = self.config().argmax;
        let (_, n) = x.share().rows_cols();
        let m = self.max(x, method)?;
        x.sub(&m.repeat_last(n).reshape(x.dims())?)
    }

    fn shifted_exp(&mut self, x: &ArithShare) -> Result<(ArithShare, ArithShare)> {
        let shifted = self.shift_by_max(x)?;
        let e = self.exp(&shifted)?;
        let total = e.sum_last();
        Ok((e, total))
    }
}

/// Coefficients of the `erf` series, index `k` multiplying `x^(2k+1)`.
pub fn erf_coefficients(k_max: u32) -> Vec<f64> {
    let scale = 2.0 / std::f64::consts::PI.sqrt();
    let mut factorial = 1.0;
    (0..=k_max)
        .map(|k| {
            if k > 0 {
                factorial *= k as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            scale * sign / (factorial * (2 * k + 1) as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::party::{simulate, PartyConfig};

    #[test]
    fn validate_rejects_zero_counts() {
        let mut c = ApproxConfig::default();
        assert!(c.validate().is_ok());
        c.log_order = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn erf_coefficients_start_with_two_over_sqrt_pi() {
        let c = erf_coefficients(2);
        assert!((c[0] - 1.128_379_167_095_512_6).abs() < 1e-15);
        assert!((c[1] + c[0] / 3.0).abs() < 1e-15);
        assert!((c[2] - c[0] / 10.0).abs() < 1e-15);
    }

    #[test]
    fn smoke_values() {
        let out = simulate(2, 1, &PartyConfig::default(), |p| {
            let x = p.share_f64(0, Some((&[1], &[1.0])))?;
            Ok([
                { let t = p.exp(&x)?; p.reveal_f64(&t)? }[0],
                { let t = p.reciprocal(&x.mul_int(-2))?; p.reveal_f64(&t)? }[0],
                { let t = p.sqrt(&x.mul_int(4))?; p.reveal_f64(&t)? }[0],
                { let t = p.log(&x)?; p.reveal_f64(&t)? }[0],
                { let t = p.sigmoid(&x)?; p.reveal_f64(&t)? }[0],
                { let t = p.erf(&x)?; p.reveal_f64(&t)? }[0],
                { let t = p.cos(&x)?; p.reveal_f64(&t)? }[0],
            ])
        })
        .unwrap();
        let want = [
            1f64.exp(),
            -0.5,
            2.0,
            0.0,
            1.0 / (1.0 + (-1f64).exp()),
            0.842_700_792_949_714_9,
            1f64.cos(),
        ];
        for (got, want) in out[0].iter().zip(want) {
            assert!((got - want).abs() < 0.02, "{got} vs {want}");
        }
    }
}
