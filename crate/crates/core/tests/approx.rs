mod common;

use common::approx_cases::{cases, worst_ulps, BITS};
use common::oracle::Oracle;
use common::{decode_all, encode_all, linspace, logspace, run_unary};
use mpc_engine::{ApproxConfig, Error, Initial, PartyConfig};

#[test]
fn single_party_equals_fixed_point_oracle() {
    let o = Oracle::new(BITS);
    for case in cases() {
        let raw = encode_all(&case.inputs, BITS);
        let got = run_unary(1, 0, &PartyConfig::default(), &[raw.len()], &case.inputs, case.secure);
        assert_eq!(got, (case.oracle)(&o, &raw), "{}", case.name);
    }
}

#[test]
fn four_parties_stay_within_truncation_error_of_oracle() {
    let o = Oracle::new(BITS);
    for case in cases() {
        let want = (case.oracle)(&o, &encode_all(&case.inputs, BITS));
        for seed in 0..3 {
            let got = run_unary(4, seed, &PartyConfig::default(), &[want.len()], &case.inputs, case.secure);
            let err = worst_ulps(&got, &want);
            assert!(err <= case.ulps, "{} seed {seed}: {err} ulps", case.name);
        }
    }
}

#[test]
fn oracle_tracks_real_functions() {
    let o = Oracle::new(BITS);
    for case in cases() {
        let raw = encode_all(&case.inputs, BITS);
        let got = decode_all(&(case.oracle)(&o, &raw), BITS);
        let xs = decode_all(&raw, BITS);
        let worst = got
            .iter()
            .zip(&xs)
            .map(|(&g, &x)| {
                let r = (case.real)(x);
                (g - r).abs() / r.abs().max(1.0)
            })
            .fold(0.0, f64::max);
        assert!(worst <= case.tol, "{}: {worst}", case.name);
    }
}

#[test]
fn log_absolute_error_away_from_zero() {
    let o = Oracle::new(BITS);
    let xs = logspace(0.01, 100.0, 201);
    let raw = encode_all(&xs, BITS);
    let got = decode_all(&o.log(&raw), BITS);
    for (g, x) in got.iter().zip(decode_all(&raw, BITS)) {
        assert!((g - x.ln()).abs() < 0.05, "log({x}) = {g}");
    }
}

#[test]
fn powers_and_row_functions_equal_oracle() {
    let o = Oracle::new(BITS);
    let xs = linspace(-1.5, 1.5, 24);
    let raw = encode_all(&xs, BITS);
    for k in 0..6 {
        let got = run_unary(1, 0, &PartyConfig::default(), &[24], &xs, |p, x| p.pow_int(x, k));
        assert_eq!(got, o.pow_int(&raw, k), "x^{k}");
    }
    let rows = [4, 6];
    let got = run_unary(1, 0, &PartyConfig::default(), &rows, &xs, |p, x| p.softmax(x));
    assert_eq!(got, o.softmax(&raw, 6));
    let got = run_unary(1, 0, &PartyConfig::default(), &rows, &xs, |p, x| p.log_softmax(x));
    assert_eq!(got, o.log_softmax(&raw, 6));
    for (row, chunk) in decode_all(&got, BITS).chunks(6).zip(xs.chunks(6)) {
        let m = chunk.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + chunk.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (g, v) in row.iter().zip(chunk) {
            assert!((g - (v - lse)).abs() < 5e-3);
        }
    }
}

#[test]
fn constant_initial_values_follow_oracle() {
    let mut approx = ApproxConfig::default();
    approx.recip_initial = Initial::Constant(0.01);
    approx.log_initial = Initial::Constant(1.0);
    approx.log_iterations = 6;
    let cfg = PartyConfig {
        approx: approx.clone(),
        ..PartyConfig::default()
    };
    let o = Oracle { bits: BITS, cfg: approx };
    let xs = linspace(0.5, 4.0, 50);
    let raw = encode_all(&xs, BITS);
    let got = run_unary(1, 0, &cfg, &[50], &xs, |p, x| p.reciprocal(x));
    assert_eq!(got, o.reciprocal(&raw));
    let got = run_unary(1, 0, &cfg, &[50], &xs, |p, x| p.log(x));
    assert_eq!(got, o.log(&raw));
    for (g, x) in decode_all(&got, BITS).iter().zip(&xs) {
        assert!((g - x.ln()).abs() < 0.02, "log({x}) = {g}");
    }
}

#[test]
fn guard_bits_trade_precision() {
    let xs = linspace(-4.0, 4.0, 101);
    let raw = encode_all(&xs, BITS);
    let err = |guard: u32| {
        let mut o = Oracle::new(BITS);
        o.cfg.guard_bits = guard;
        decode_all(&o.exp(&raw), BITS)
            .iter()
            .zip(decode_all(&raw, BITS))
            .map(|(g, x)| (g - x.exp()).abs() / x.exp().max(1.0))
            .fold(0.0, f64::max)
    };
    assert!(err(4) < err(0));
    let mut bad = ApproxConfig::default();
    bad.guard_bits = 9;
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn debug_domain_reports_out_of_domain_inputs() {
    let cfg = PartyConfig {
        debug_domain: true,
        ..PartyConfig::default()
    };
    for world in [1, 3] {
        let out = mpc_engine::simulate(world, 2, &cfg, |p| {
            let x = p.share_f64(0, Some((&[3], &[1.0, -2.0, 4.0])))?;
            let log = p.log(&x).map(|_| ());
            let sqrt = p.inv_sqrt(&x).map(|_| ());
            let recip = p.reciprocal(&x).map(|_| ());
            Ok((log, sqrt, recip))
        })
        .unwrap();
        for (log, sqrt, recip) in out {
            assert!(matches!(log, Err(Error::DomainViolation(_))));
            assert!(matches!(sqrt, Err(Error::DomainViolation(_))));
            assert!(recip.is_ok());
        }
    }
}
