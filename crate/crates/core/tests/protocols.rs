mod common;

use common::bigint;
use common::oracle::round_div;
use mpc_engine::ring::{decomposed_matmul, decomposed_mul, Conv2dParams, DecompositionMode, RingElement};
use mpc_engine::{simulate, ArithShare, FixedPointEncoder, Party, PartyConfig, RingTensor, Result, SumMode};
use proptest::prelude::*;

fn int() -> FixedPointEncoder {
    FixedPointEncoder::integer()
}

fn share_int(p: &mut Party, src: usize, dims: &[usize], values: &[u64]) -> Result<ArithShare> {
    if p.rank() == src {
        let t = RingTensor::new(dims.to_vec(), values.to_vec())?;
        p.share(src, Some(&t), int())
    } else {
        p.share(src, None, int())
    }
}

fn bin_input(p: &mut Party, src: usize, values: &[u64]) -> Result<mpc_engine::BinShare> {
    if p.rank() == src {
        let t = RingTensor::from_vec(values.to_vec());
        p.share_bin(src, Some(&t), int())
    } else {
        p.share_bin(src, None, int())
    }
}

/// Runs `f` at every rank and checks that all ranks saw the same result.
fn agreed<T: PartialEq + std::fmt::Debug + Send>(
    world: usize,
    seed: u64,
    f: impl Fn(&mut Party) -> Result<T> + Sync,
) -> T {
    let mut out = simulate(world, seed, &PartyConfig::default(), f).unwrap();
    for other in &out[1..] {
        assert_eq!(other, &out[0]);
    }
    out.swap_remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn share_then_reveal_is_identity(
        world in 1usize..=8,
        seed in any::<u64>(),
        values in prop::collection::vec(any::<u64>(), 1..20),
    ) {
        let src = (seed as usize) % world;
        let got = agreed(world, seed, |p| {
            let x = share_int(p, src, &[values.len()], &values)?;
            Ok(p.reveal(&x)?.into_data())
        });
        prop_assert_eq!(got, values);
    }

    #[test]
    fn elementwise_products_match_bigint(
        world in 1usize..=8,
        seed in any::<u64>(),
        pairs in prop::collection::vec((any::<u64>(), any::<u64>()), 1..16),
    ) {
        let (a, b): (Vec<u64>, Vec<u64>) = pairs.into_iter().unzip();
        let got = agreed(world, seed, |p| {
            let x = share_int(p, 0, &[a.len()], &a)?;
            let y = share_int(p, world - 1, &[b.len()], &b)?;
            let z = p.mul(&x, &y)?;
            let s = p.square(&x)?;
            Ok((p.reveal(&z)?.into_data(), p.reveal(&s)?.into_data()))
        });
        prop_assert_eq!(got.0, bigint::mul(&a, &b));
        prop_assert_eq!(got.1, bigint::mul(&a, &a));
    }

    #[test]
    fn matmul_matches_bigint(
        world in 1usize..=8,
        seed in any::<u64>(),
        m in 1usize..4, k in 1usize..5, n in 1usize..4,
        words in prop::collection::vec(any::<u64>(), 32),
    ) {
        let a: Vec<u64> = words.iter().cycle().take(m * k).copied().collect();
        let b: Vec<u64> = words.iter().rev().cycle().take(k * n).copied().collect();
        let got = agreed(world, seed, |p| {
            let x = share_int(p, 0, &[m, k], &a)?;
            let y = share_int(p, world - 1, &[k, n], &b)?;
            let z = p.matmul(&x, &y)?;
            Ok(p.reveal(&z)?.into_data())
        });
        prop_assert_eq!(got, bigint::matmul(&a, &b, m, k, n));
    }

    #[test]
    fn conv2d_matches_bigint(
        world in 1usize..=8,
        seed in any::<u64>(),
        stride in 1usize..3,
        padding in 0usize..2,
        words in prop::collection::vec(any::<u64>(), 64),
    ) {
        let xd = [2, 2, 4, 4];
        let kd = [3, 2, 2, 2];
        let x: Vec<u64> = words.iter().cycle().take(64).copied().collect();
        let k: Vec<u64> = words.iter().rev().cycle().take(24).copied().collect();
        let params = Conv2dParams { stride, padding };
        let got = agreed(world, seed, |p| {
            let a = share_int(p, 0, &xd, &x)?;
            let b = share_int(p, world - 1, &kd, &k)?;
            let c = p.conv2d(&a, &b, params)?;
            Ok((c.dims().to_vec(), p.reveal(&c)?.into_data()))
        });
        let (want, dims) = bigint::conv2d(&x, xd, &k, kd, stride, padding);
        prop_assert_eq!(got.0, dims.to_vec());
        prop_assert_eq!(got.1, want);
    }

    #[test]
    fn adder_and_sums_match_bigint(
        world in 1usize..=5,
        seed in any::<u64>(),
        rows in prop::collection::vec(prop::collection::vec(any::<u64>(), 8), 1..6),
    ) {
        let got = agreed(world, seed, |p| {
            let xs = rows
                .iter()
                .enumerate()
                .map(|(i, r)| bin_input(p, i % world, r))
                .collect::<Result<Vec<_>>>()?;
            let pair = match xs.get(1) {
                Some(y) => p.add_ring(&xs[0], y)?,
                None => p.add_ring(&xs[0], &xs[0])?,
            };
            let tree = p.sum_ring(&xs, SumMode::Tree)?;
            let seq = p.sum_ring(&xs, SumMode::LowMemory)?;
            Ok((
                p.reveal_bin(&pair)?.into_data(),
                p.reveal_bin(&tree)?.into_data(),
                p.reveal_bin(&seq)?.into_data(),
            ))
        });
        let second = rows.get(1).unwrap_or(&rows[0]);
        let want_pair: Vec<u64> = (0..8).map(|j| bigint::sum(&[rows[0][j], second[j]])).collect();
        let want_sum: Vec<u64> = (0..8)
            .map(|j| bigint::sum(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        prop_assert_eq!(got.0, want_pair);
        prop_assert_eq!(got.1, want_sum.clone());
        prop_assert_eq!(got.2, want_sum);
    }

    #[test]
    fn arithmetic_binary_roundtrip(
        world in 1usize..=8,
        seed in any::<u64>(),
        values in prop::collection::vec(any::<u64>(), 1..24),
    ) {
        let got = agreed(world, seed, |p| {
            let x = share_int(p, 0, &[values.len()], &values)?;
            let b = p.a2b(&x)?;
            let plain = p.reveal_bin(&b)?.into_data();
            let back = p.b2a(&b)?;
            Ok((plain, p.reveal(&back)?.into_data()))
        });
        prop_assert_eq!(&got.0, &values);
        prop_assert_eq!(&got.1, &values);
    }

    #[test]
    fn and_matches_plaintext(
        world in 1usize..=6,
        seed in any::<u64>(),
        pairs in prop::collection::vec((any::<u64>(), any::<u64>()), 1..16),
    ) {
        let (a, b): (Vec<u64>, Vec<u64>) = pairs.into_iter().unzip();
        let got = agreed(world, seed, |p| {
            let x = bin_input(p, 0, &a)?;
            let y = bin_input(p, world - 1, &b)?;
            let z = p.and(&x, &y)?;
            let n = p.not(&z);
            Ok((p.reveal_bin(&z)?.into_data(), p.reveal_bin(&n)?.into_data()))
        });
        let want: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x & y).collect();
        prop_assert_eq!(&got.0, &want);
        prop_assert_eq!(got.1, want.iter().map(|w| !w).collect::<Vec<_>>());
    }

    #[test]
    fn truncation_error_is_bounded(
        world in 1usize..=6,
        seed in any::<u64>(),
        raw in prop::collection::vec(-(1i64 << 44)..(1i64 << 44), 1..32),
        bits in 1u32..24,
    ) {
        let data: Vec<u64> = raw.iter().map(|&v| v as u64).collect();
        let got = agreed(world, seed, |p| {
            let x = share_int(p, 0, &[data.len()], &data)?;
            let t = p.truncate(&x, bits)?;
            Ok(p.reveal(&t)?.to_signed())
        });
        for (g, &v) in got.iter().zip(&raw) {
            let err = (g - round_div(v, 1 << bits)).abs();
            prop_assert!(err <= world as i64, "{v} >> {bits}: off by {err}");
        }
    }

    #[test]
    fn four_limb_products_are_exact(a in any::<u64>(), b in any::<u64>()) {
        let want = a.wrapping_mul(b);
        for mode in [DecompositionMode::FourX16, DecompositionMode::ThreeX22] {
            prop_assert_eq!(decomposed_mul(RingElement(a), RingElement(b), mode).0, want);
        }
    }

    #[test]
    fn limb_matmul_matches_bigint(
        k in 1usize..40,
        words in prop::collection::vec(any::<u64>(), 80),
        small in any::<bool>(),
    ) {
        let mask = if small { (1u64 << 20) - 1 } else { u64::MAX };
        let a: Vec<u64> = words.iter().cycle().take(2 * k).map(|w| w & mask).collect();
        let b: Vec<u64> = words.iter().rev().cycle().take(k * 2).map(|w| w & mask).collect();
        let lhs = RingTensor::new(vec![2, k], a.clone()).unwrap();
        let rhs = RingTensor::new(vec![k, 2], b.clone()).unwrap();
        for mode in [DecompositionMode::FourX16, DecompositionMode::ThreeX22] {
            let (got, _) = decomposed_matmul(&lhs, &rhs, mode).unwrap();
            prop_assert_eq!(got.data(), &bigint::matmul(&a, &b, 2, k, 2)[..]);
        }
    }
}

#[test]
fn compute_wraps_matches_share_oracle() {
    for world in 2..=6 {
        let values: Vec<u64> = (0..400).map(|i| ((i as i64 - 200) * 7919) as u64).collect();
        let out = simulate(world, 40 + world as u64, &PartyConfig::default(), |p| {
            let x = share_int(p, 0, &[values.len()], &values)?;
            let theta = p.compute_wraps(&x)?;
            Ok((x.share().to_signed(), p.reveal(&theta)?.to_signed()))
        })
        .unwrap();
        let theta = &out[0].1;
        for i in 0..values.len() {
            let shares: Vec<i64> = out.iter().map(|(s, _)| s[i]).collect();
            assert_eq!(theta[i], bigint::wraps(&shares), "world {world}, element {i}");
        }
    }
}

#[test]
fn comparisons_on_fixed_point_values() {
    let xs = [-3.5, -1.0, -1.0 / 65536.0, 0.0, 1.0 / 65536.0, 2.0, 1000.25];
    let ys = [-3.5, 0.0, 0.0, 0.0, 0.0, 2.5, -1000.0];
    for world in [1, 2, 3, 5] {
        let got = agreed(world, 7, |p| {
            let dims = [xs.len()];
            let x = p.share_f64(0, Some((&dims, &xs)))?;
            let y = p.share_f64(world - 1, Some((&dims, &ys)))?;
            let ltz = p.ltz(&x)?;
            let relu = p.relu(&x)?;
            let sign = p.sign(&x)?;
            let eq = p.eq(&x, &y)?;
            let mux = p.mux(&ltz, &x, &y)?;
            Ok((
                p.reveal(&ltz)?.to_signed(),
                p.reveal_f64(&relu)?,
                p.reveal(&sign)?.to_signed(),
                p.reveal(&eq)?.to_signed(),
                p.reveal_f64(&mux)?,
            ))
        });
        let ltz: Vec<i64> = xs.iter().map(|&x| (x < 0.0) as i64).collect();
        let relu: Vec<f64> = xs.iter().map(|&x| x.max(0.0)).collect();
        let sign: Vec<i64> = xs.iter().map(|&x| if x > 0.0 { 1 } else { -1 }).collect();
        let eq: Vec<i64> = xs.iter().zip(&ys).map(|(x, y)| (x == y) as i64).collect();
        let mux: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| if x < 0.0 { x } else { y }).collect();
        assert_eq!(got, (ltz, relu, sign, eq, mux), "world {world}");
    }
}

#[test]
fn round_counts_per_operation() {
    for world in [2usize, 3, 4, 5, 8] {
        let levels = (world as f64).log2().ceil() as u64;
        let out = simulate(world, 1, &PartyConfig::default(), |p| {
            let x = p.share_f64(0, Some((&[4], &[1.0, -2.0, 3.0, 0.5])))?;
            let b = p.a2b(&x)?;
            let _ = p.add_ring(&b, &b)?;
            let _ = p.sum_ring(&[b.clone(), b.clone(), b.clone()], SumMode::LowMemory)?;
            let _ = p.b2a(&b)?;
            let _ = p.ltz(&x)?;
            Ok(p.metrics().clone())
        })
        .unwrap();
        let per_call = |name: &str| {
            let s = out[0].op(name);
            s.rounds / s.calls
        };
        assert_eq!(per_call("a2b"), 6 * levels, "world {world}");
        assert_eq!(per_call("add_ring"), 6);
        assert_eq!(per_call("sum_ring"), 12);
        assert_eq!(per_call("b2a"), 1);
        assert_eq!(per_call("ltz"), 6 * levels + 1);
    }
}
