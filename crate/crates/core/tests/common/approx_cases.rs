//! Frozen accuracy table of the approximations: inputs, the private
//! function, its fixed-point oracle and the real function, with bounds.

use mpc_engine::{ArithShare, Party, Result};
use statrs::function::erf::erf;

use super::oracle::Oracle;
use super::{linspace, logspace};

pub const BITS: u32 = 16;

pub type Secure = fn(&mut Party, &ArithShare) -> Result<ArithShare>;
pub type Plain = fn(&Oracle, &[i64]) -> Vec<i64>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<f64>,
    pub secure: Secure,
    pub oracle: Plain,
    pub real: fn(f64) -> f64,
    /// Worst `|four parties - oracle|` in units of the last place, divided
    /// by `max(1, |value|)`.
    pub ulps: f64,
    /// Worst `|oracle - real| / max(1, |real|)`.
    pub tol: f64,
}

pub fn cases() -> Vec<Case> {
    let sym = linspace(-4.0, 4.0, 201);
    let pos = logspace(0.1, 100.0, 201);
    vec![
        Case {
            name: "exp",
            inputs: sym.clone(),
            secure: |p, x| p.exp(x),
            oracle: |o, x| o.exp(x),
            real: f64::exp,
            ulps: 80.0,
            tol: 0.04,
        },
        Case {
            name: "sin",
            inputs: sym.clone(),
            secure: |p, x| p.sin(x),
            oracle: |o, x| o.cos_sin(x).1,
            real: f64::sin,
            ulps: 320.0,
            tol: 8e-3,
        },
        Case {
            name: "cos",
            inputs: sym.clone(),
            secure: |p, x| p.cos(x),
            oracle: |o, x| o.cos_sin(x).0,
            real: f64::cos,
            ulps: 320.0,
            tol: 8e-3,
        },
        Case {
            name: "reciprocal",
            inputs: pos.clone(),
            secure: |p, x| p.reciprocal(x),
            oracle: |o, x| o.reciprocal(x),
            real: f64::recip,
            ulps: 8.0,
            tol: 1e-4,
        },
        Case {
            name: "inv_sqrt",
            inputs: pos.clone(),
            secure: |p, x| p.inv_sqrt(x),
            oracle: |o, x| o.inv_sqrt(x),
            real: |x| x.sqrt().recip(),
            ulps: 16.0,
            tol: 2e-2,
        },
        Case {
            name: "sqrt",
            inputs: pos.clone(),
            secure: |p, x| p.sqrt(x),
            oracle: |o, x| o.sqrt(x),
            real: f64::sqrt,
            ulps: 128.0,
            tol: 2e-2,
        },
        Case {
            name: "log",
            inputs: logspace(1e-4, 100.0, 201),
            secure: |p, x| p.log(x),
            oracle: |o, x| o.log(x),
            real: f64::ln,
            ulps: 64.0,
            tol: 0.03,
        },
        Case {
            name: "sigmoid",
            inputs: sym.clone(),
            secure: |p, x| p.sigmoid(x),
            oracle: |o, x| o.sigmoid(x),
            real: |x| 1.0 / (1.0 + (-x).exp()),
            ulps: 20.0,
            tol: 1.2e-3,
        },
        Case {
            name: "tanh",
            inputs: sym,
            secure: |p, x| p.tanh(x),
            oracle: |o, x| o.tanh(x),
            real: f64::tanh,
            ulps: 36.0,
            tol: 2.5e-3,
        },
        Case {
            name: "erf",
            inputs: linspace(-1.0, 1.0, 201),
            secure: |p, x| p.erf(x),
            oracle: |o, x| o.erf(x),
            real: erf,
            ulps: 6.0,
            tol: 5e-5,
        },
    ]
}

pub fn worst_ulps(got: &[i64], want: &[i64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(&g, &w)| {
            let scale = (w as f64 / (1u64 << BITS) as f64).abs().max(1.0);
            (g - w).abs() as f64 / scale
        })
        .fold(0.0, f64::max)
}
