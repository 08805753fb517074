use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::FixedPointEncoder;
use crate::shares::ArithShare;

use super::{Gradients, Module, Param};

/// Stochastic gradient descent with momentum:
/// `v <- momentum * v + g`, `w <- w - lr * v` (the first step uses `v = g`).
/// Gradients may carry more fractional bits than the weights; the update is
/// rounded to the weight precision.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: BTreeMap<String, ArithShare>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: BTreeMap::new(),
        }
    }

    /// Updates every parameter that has a gradient. All scalings of one
    /// step share a single truncation.
    pub fn step(&mut self, p: &mut Party, model: &mut Module, grads: &Gradients) -> Result<()> {
        let mut names = Vec::new();
        let mut steps = Vec::new();
        for (name, _) in model.parameters() {
            if let Some(g) = grads.param(&name) {
                names.push(name);
                steps.push(g.clone());
            }
        }
        if names.is_empty() {
            return Ok(());
        }
        if self.momentum != 0.0 {
            let (old_names, old): (Vec<&String>, Vec<&ArithShare>) = names
                .iter()
                .filter_map(|n| self.velocity.get(n).map(|v| (n, v)))
                .unzip();
            if !old.is_empty() {
                let fine = old.iter().map(|v| v.precision_bits()).max().unwrap_or(0);
                let decayed = scale_all(p, &old, self.momentum, fine)?;
                for (n, d) in old_names.into_iter().zip(decayed) {
                    let i = names.iter().position(|x| x == n).expect("present");
                    let (a, b) = (steps[i].precision_bits(), d.precision_bits());
                    steps[i] = steps[i].widen(b.saturating_sub(a)).add(&d.widen(a.saturating_sub(b)))?;
                }
            }
            for (n, s) in names.iter().zip(&steps) {
                self.velocity.insert(n.clone(), s.clone());
            }
        }
        let refs: Vec<&ArithShare> = steps.iter().collect();
        let updates = scale_all(p, &refs, self.lr, p.encoder().precision_bits())?;
        let mut by_name: BTreeMap<String, ArithShare> = names.into_iter().zip(updates).collect();
        for (name, param) in model.parameters_mut() {
            if let Some(u) = by_name.remove(&name) {
                let Param::Shared(w) = param else {
                    return Err(Error::Config("model is not encrypted".into()));
                };
                *w = w.sub(&u)?;
            }
        }
        Ok(())
    }
}

/// `c * x_i` for every tensor at `out_bits` fractional bits, truncated
/// together.
fn scale_all(p: &mut Party, xs: &[&ArithShare], c: f64, out_bits: u32) -> Result<Vec<ArithShare>> {
    let fine = xs.iter().map(|x| x.precision_bits()).max().unwrap_or(0);
    let flat: Vec<ArithShare> = xs
        .iter()
        .map(|x| x.widen(fine - x.precision_bits()).reshape(&[x.len()]))
        .collect::<Result<_>>()?;
    let refs: Vec<&ArithShare> = flat.iter().collect();
    let joined = ArithShare::cat0(&refs)?;
    let coeff = p.encoder();
    let k = coeff.encode(c)?.signed();
    let product = joined.mul_int(k).with_encoder(FixedPointEncoder::new(fine + coeff.precision_bits()));
    let drop = (fine + coeff.precision_bits())
        .checked_sub(out_bits)
        .ok_or_else(|| Error::Config(format!("cannot scale to {out_bits} bits")))?;
    let scaled = p.truncate(&product, drop)?.with_encoder(FixedPointEncoder::new(out_bits));
    let mut out = Vec::with_capacity(xs.len());
    let mut start = 0;
    for x in xs {
        let end = start + x.len();
        out.push(scaled.slice_rows(start, end)?.reshape(x.dims())?);
        start = end;
    }
    Ok(out)
}
