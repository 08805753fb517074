//! Single-party fixed-point arithmetic on raw `i64` values, following the
//! same operation order as the private protocols. Products wrap like the
//! ring; every rescaling divides rounding half away from zero.

use mpc_engine::{ApproxConfig, Initial};

pub fn round_div(a: i64, d: u64) -> i64 {
    let (a, d) = (a as i128, d as i128);
    let q = (2 * a.abs() + d) / (2 * d);
    (if a < 0 { -q } else { q }) as i64
}

fn enc_at(x: f64, bits: u32) -> i64 {
    (x * (1u64 << bits) as f64).round() as i64
}

pub struct Oracle {
    pub bits: u32,
    pub cfg: ApproxConfig,
}

type V = Vec<i64>;

fn zip(a: &[i64], b: &[i64], f: impl Fn(i64, i64) -> i64) -> V {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl Oracle {
    pub fn new(bits: u32) -> Self {
        Oracle {
            bits,
            cfg: ApproxConfig::default(),
        }
    }

    pub fn enc(&self, x: f64) -> i64 {
        enc_at(x, self.bits)
    }

    fn prod(a: &[i64], b: &[i64], drop: u32) -> V {
        zip(a, b, |x, y| round_div(x.wrapping_mul(y), 1 << drop))
    }

    pub fn mul(&self, a: &[i64], b: &[i64]) -> V {
        Self::prod(a, b, self.bits)
    }

    pub fn trunc(&self, a: &[i64], bits: u32) -> V {
        a.iter().map(|&x| round_div(x, 1 << bits)).collect()
    }

    fn add_c(&self, a: &[i64], c: f64) -> V {
        let k = self.enc(c);
        a.iter().map(|&x| x.wrapping_add(k)).collect()
    }

    fn rsub_c(&self, c: f64, a: &[i64]) -> V {
        let k = self.enc(c);
        a.iter().map(|&x| k.wrapping_sub(x)).collect()
    }

    fn scale(a: &[i64], k: i64) -> V {
        a.iter().map(|&x| x.wrapping_mul(k)).collect()
    }

    fn weighted_sum(&self, terms: &[(&V, f64)]) -> V {
        let mut acc = vec![0i64; terms[0].0.len()];
        for (t, c) in terms {
            let k = self.enc(*c);
            for (a, &v) in acc.iter_mut().zip(t.iter()) {
                *a = a.wrapping_add(v.wrapping_mul(k));
            }
        }
        self.trunc(&acc, self.bits)
    }

    /// `(1 + x / 2^n)^(2^n)`, squaring at `guard` extra bits until the last two.
    pub fn exp(&self, x: &[i64]) -> V {
        let (n, g) = (self.cfg.exp_iterations, self.cfg.guard_bits);
        let wide = self.bits + g;
        let base = if g >= n {
            Self::scale(x, 1 << (g - n))
        } else {
            self.trunc(x, n - g)
        };
        let one = enc_at(1.0, wide);
        let mut y: V = base.iter().map(|&v| v.wrapping_add(one)).collect();
        let mut scale = wide;
        let narrow_at = n.saturating_sub(2);
        for k in 0..n {
            if k == narrow_at {
                y = Self::prod(&y, &y, wide + g);
                scale = self.bits;
            } else {
                y = Self::prod(&y, &y, scale);
            }
        }
        y
    }

    pub fn cos_sin(&self, x: &[i64]) -> (V, V) {
        let (n, g) = (self.cfg.trig_iterations, self.cfg.guard_bits);
        let wide = self.bits + g;
        let mut im = if g >= n {
            Self::scale(x, 1 << (g - n))
        } else {
            self.trunc(x, n - g)
        };
        let mut re = vec![enc_at(1.0, wide); x.len()];
        for k in 0..n {
            let drop = if k + 1 == n { wide + g } else { wide };
            let aa = Self::prod(&re, &re, drop);
            let bb = Self::prod(&im, &im, drop);
            let ab = Self::prod(&re, &im, drop);
            re = zip(&aa, &bb, i64::wrapping_sub);
            im = Self::scale(&ab, 2);
        }
        (re, im)
    }

    fn sign(x: &[i64]) -> V {
        x.iter().map(|&v| if v > 0 { 1 } else { -1 }).collect()
    }

    pub fn reciprocal_positive(&self, x: &[i64], initial: Initial) -> V {
        let mut y = match initial {
            Initial::Formula => {
                let e = self.exp(&self.rsub_c(0.5, x));
                self.add_c(&Self::scale(&e, 3), 0.003)
            }
            Initial::Constant(c) => vec![self.enc(c); x.len()],
        };
        for _ in 0..self.cfg.recip_iterations {
            let xy = self.mul(x, &y);
            let err = self.rsub_c(2.0, &xy);
            y = self.mul(&y, &err);
        }
        y
    }

    pub fn reciprocal(&self, x: &[i64]) -> V {
        let s = Self::sign(x);
        let a = zip(x, &s, i64::wrapping_mul);
        let r = self.reciprocal_positive(&a, self.cfg.recip_initial);
        zip(&r, &s, i64::wrapping_mul)
    }

    pub fn inv_sqrt(&self, x: &[i64]) -> V {
        let half = self.trunc(x, 1);
        let arg: V = self.add_c(&half, 0.2).iter().map(|v| v.wrapping_neg()).collect();
        let e = self.exp(&arg);
        let k = self.enc(2.2);
        let mut y: V = e.iter().map(|&v| round_div(v.wrapping_mul(k), 1 << self.bits)).collect();
        y = self.add_c(&y, 0.2);
        y = zip(&y, &self.trunc(x, 10), i64::wrapping_sub);
        for _ in 0..self.cfg.sqrt_iterations {
            let y2 = self.mul(&y, &y);
            let xy2 = self.mul(x, &y2);
            let err = self.rsub_c(3.0, &xy2);
            y = self.trunc(&self.mul(&y, &err), 1);
        }
        y
    }

    pub fn sqrt(&self, x: &[i64]) -> V {
        self.mul(x, &self.inv_sqrt(x))
    }

    pub fn log(&self, x: &[i64]) -> V {
        let mut y = match self.cfg.log_initial {
            Initial::Formula => {
                let a: V = x.iter().map(|&v| round_div(v, 120)).collect();
                let arg = self.add_c(&Self::scale(x, -2), -1.0);
                let e = self.exp(&arg);
                self.add_c(&zip(&a, &Self::scale(&e, 20), i64::wrapping_sub), 3.0)
            }
            Initial::Constant(c) => vec![self.enc(c); x.len()],
        };
        for _ in 0..self.cfg.log_iterations {
            let neg: V = y.iter().map(|v| v.wrapping_neg()).collect();
            let e = self.exp(&neg);
            let h = self.rsub_c(1.0, &self.mul(x, &e));
            let mut powers = vec![h.clone()];
            for _ in 1..self.cfg.log_order {
                let next = self.mul(powers.last().unwrap(), &h);
                powers.push(next);
            }
            let terms: Vec<(&V, f64)> = powers
                .iter()
                .enumerate()
                .map(|(k, t)| (t, 1.0 / (k + 1) as f64))
                .collect();
            y = zip(&y, &self.weighted_sum(&terms), i64::wrapping_sub);
        }
        y
    }

    pub fn pow_int(&self, x: &[i64], k: u32) -> V {
        if k == 0 {
            return vec![self.enc(1.0); x.len()];
        }
        let mut result: Option<V> = None;
        let mut base = x.to_vec();
        let mut rest = k;
        loop {
            if rest & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => self.mul(&r, &base),
                });
            }
            rest >>= 1;
            if rest == 0 {
                break;
            }
            base = self.mul(&base, &base);
        }
        result.unwrap()
    }

    pub fn sigmoid(&self, x: &[i64]) -> V {
        let pos: V = x.iter().map(|&v| (v > 0) as i64).collect();
        let a: V = x.iter().zip(&pos).map(|(&v, &p)| v.wrapping_mul(2 * p - 1)).collect();
        let neg: V = a.iter().map(|v| v.wrapping_neg()).collect();
        let d = self.add_c(&self.exp(&neg), 1.0);
        let r = self.reciprocal_positive(&d, Initial::Constant(self.cfg.sigmoid_recip_initial));
        let flip = self.add_c(&Self::scale(&r, 2), -1.0);
        let chosen = zip(&pos, &flip, i64::wrapping_mul);
        self.add_c(&zip(&chosen, &r, i64::wrapping_sub), 1.0)
    }

    pub fn tanh(&self, x: &[i64]) -> V {
        let s = self.sigmoid(&Self::scale(x, 2));
        self.add_c(&Self::scale(&s, 2), -1.0)
    }

    pub fn erf(&self, x: &[i64]) -> V {
        let k_max = self.cfg.erf_terms;
        let x2 = self.mul(x, x);
        let mut powers = vec![x.to_vec()];
        for _ in 0..k_max {
            let next = self.mul(powers.last().unwrap(), &x2);
            powers.push(next);
        }
        let c0 = 2.0 / std::f64::consts::PI.sqrt();
        let mut fact = 1.0;
        let coeffs: Vec<f64> = (0..=k_max)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                c0 * s / (fact * (2 * k + 1) as f64)
            })
            .collect();
        let terms: Vec<(&V, f64)> = powers.iter().zip(coeffs).collect();
        self.weighted_sum(&terms)
    }

    fn shifted_rows(x: &[i64], n: usize) -> V {
        x.chunks(n)
            .flat_map(|row| {
                let m = *row.iter().max().unwrap();
                row.iter().map(move |&v| v.wrapping_sub(m))
            })
            .collect()
    }

    pub fn softmax(&self, x: &[i64], n: usize) -> V {
        let e = self.exp(&Self::shifted_rows(x, n));
        let totals: V = e.chunks(n).map(|r| r.iter().fold(0i64, |a, &b| a.wrapping_add(b))).collect();
        let r = self.reciprocal_positive(&totals, Initial::Formula);
        let spread: V = r.iter().flat_map(|&v| std::iter::repeat(v).take(n)).collect();
        self.mul(&e, &spread)
    }

    pub fn log_softmax(&self, x: &[i64], n: usize) -> V {
        let shifted = Self::shifted_rows(x, n);
        let e = self.exp(&shifted);
        let totals: V = e.chunks(n).map(|r| r.iter().fold(0i64, |a, &b| a.wrapping_add(b))).collect();
        let l = self.log(&totals);
        let spread: V = l.iter().flat_map(|&v| std::iter::repeat(v).take(n)).collect();
        zip(&shifted, &spread, i64::wrapping_sub)
    }
}
