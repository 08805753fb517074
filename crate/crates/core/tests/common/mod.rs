//! Shared test support: a bigint ring oracle, a plaintext fixed-point
//! oracle written directly on `i64` raw values, and goodness-of-fit helpers.
#![allow(dead_code)]

pub mod approx_cases;
pub mod bigint;
pub mod oracle;
pub mod stats;

use mpc_engine::{simulate, ArithShare, FixedPointEncoder, Party, PartyConfig, Result};

/// Raw fixed-point values of `xs` at `bits` fractional bits.
pub fn encode_all(xs: &[f64], bits: u32) -> Vec<i64> {
    let enc = FixedPointEncoder::new(bits);
    xs.iter().map(|&x| enc.encode(x).unwrap().signed()).collect()
}

pub fn decode_all(raw: &[i64], bits: u32) -> Vec<f64> {
    raw.iter().map(|&v| v as f64 / (1u64 << bits) as f64).collect()
}

/// Shares `values` from rank 0, applies `f` and reveals the raw result.
pub fn run_unary(
    world: usize,
    seed: u64,
    config: &PartyConfig,
    dims: &[usize],
    values: &[f64],
    f: impl Fn(&mut Party, &ArithShare) -> Result<ArithShare> + Sync,
) -> Vec<i64> {
    let out = simulate(world, seed, config, |p| {
        let x = if p.rank() == 0 {
            p.share_f64(0, Some((dims, values)))?
        } else {
            p.share_f64(0, None)?
        };
        let y = f(p, &x)?;
        Ok(p.reveal(&y)?.to_signed())
    })
    .unwrap();
    out.into_iter().next().unwrap()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}
