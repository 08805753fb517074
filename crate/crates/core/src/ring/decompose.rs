//! Ring multiplication carried out through `f64` arithmetic.
//!
//! Each 64-bit operand is split into small unsigned limbs whose pairwise
//! products (and sums of those products) stay below 2^53, so every float
//! operation is exact. Limb products whose shift reaches 64 bits vanish
//! modulo 2^64 and are never computed.

use crate::error::Result;

use super::{RingElement, RingTensor};

/// Largest integer below which every `f64` integer is exact.
const F64_EXACT: u128 = 1 << 53;

/// How operands are split into limbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecompositionMode {
    /// Four 16-bit limbs, 10 limb products.
    FourX16,
    /// Three 22-bit limbs (the top one 20 bits), 6 limb products.
    ThreeX22,
}

impl DecompositionMode {
    fn limb_bits(self) -> u32 {
        match self {
            DecompositionMode::FourX16 => 16,
            DecompositionMode::ThreeX22 => 22,
        }
    }

    fn limbs(self) -> usize {
        match self {
            DecompositionMode::FourX16 => 4,
            DecompositionMode::ThreeX22 => 3,
        }
    }

    /// Number of limb products `(i, j)` with `i + j == shift_index`.
    fn pairs_at(self, shift_index: usize) -> u128 {
        (shift_index + 1).min(self.limbs()) as u128
    }
}

fn limb(v: u64, index: usize, mode: DecompositionMode) -> u64 {
    let bits = mode.limb_bits();
    let shifted = v >> (bits * index as u32);
    if bits * (index as u32 + 1) >= 64 {
        shifted
    } else {
        shifted & ((1 << bits) - 1)
    }
}

fn split(values: &[u64], mode: DecompositionMode) -> Vec<Vec<f64>> {
    (0..mode.limbs())
        .map(|i| values.iter().map(|&v| limb(v, i, mode) as f64).collect())
        .collect()
}

fn max_limb(values: &[u64], mode: DecompositionMode) -> u128 {
    (0..mode.limbs())
        .flat_map(|i| values.iter().map(move |&v| limb(v, i, mode)))
        .max()
        .unwrap_or(0) as u128
}

/// Whether a product grouped by shift, with `inner` accumulated terms,
/// stays exact in `f64` for the given limb maxima.
fn exact(mode: DecompositionMode, inner: usize, max_a: u128, max_b: u128) -> bool {
    let worst = mode.pairs_at(mode.limbs() - 1);
    worst * inner.max(1) as u128 * max_a * max_b < F64_EXACT
}

/// `a * b mod 2^64` computed from limb products in `f64`.
///
/// `ThreeX22` falls back to `FourX16` if its limbs could not be multiplied
/// exactly, which for a single product never happens.
pub fn decomposed_mul(a: RingElement, b: RingElement, mode: DecompositionMode) -> RingElement {
    let mode = if exact(
        mode,
        1,
        max_limb(&[a.0], mode),
        max_limb(&[b.0], mode),
    ) {
        mode
    } else {
        DecompositionMode::FourX16
    };
    let bits = mode.limb_bits();
    let mut acc = 0u64;
    for s in 0..mode.limbs() {
        let mut group = 0f64;
        for i in 0..=s {
            group += limb(a.0, i, mode) as f64 * limb(b.0, s - i, mode) as f64;
        }
        acc = acc.wrapping_add((group as u64).wrapping_shl(bits * s as u32));
    }
    RingElement(acc)
}

/// Matrix product `[m, k] x [k, n]` through `f64` limb matmuls.
///
/// Returns the product and the mode actually used: `ThreeX22` is abandoned
/// for `FourX16` when the inner dimension and limb sizes could overflow the
/// exact float range, and `FourX16` splits the inner dimension into chunks
/// when necessary, so the result always equals the wrapping ring matmul.
pub fn decomposed_matmul(
    lhs: &RingTensor,
    rhs: &RingTensor,
    mode: DecompositionMode,
) -> Result<(RingTensor, DecompositionMode)> {
    // Validates shapes.
    let zero = RingTensor::zeros(lhs.dims()).matmul(&RingTensor::zeros(rhs.dims()))?;
    let (m, k, n) = (lhs.dims()[0], lhs.dims()[1], rhs.dims()[1]);
    let mut mode = mode;
    if mode == DecompositionMode::ThreeX22
        && !exact(
            mode,
            k,
            max_limb(lhs.data(), mode),
            max_limb(rhs.data(), mode),
        )
    {
        mode = DecompositionMode::FourX16;
    }
    let (max_a, max_b) = (max_limb(lhs.data(), mode), max_limb(rhs.data(), mode));
    let mut chunk = k.max(1);
    while chunk > 1 && !exact(mode, chunk, max_a, max_b) {
        chunk = chunk.div_ceil(2);
    }

    let (a, b) = (split(lhs.data(), mode), split(rhs.data(), mode));
    let bits = mode.limb_bits();
    let mut out = zero.into_data();
    let mut group = vec![0f64; m * n];
    let mut start = 0;
    while start < k {
        let end = (start + chunk).min(k);
        for s in 0..mode.limbs() {
            group.iter_mut().for_each(|g| *g = 0.0);
            for i in 0..=s {
                let (al, bl) = (&a[i], &b[s - i]);
                for r in 0..m {
                    for p in start..end {
                        let av = al[r * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &bl[p * n..(p + 1) * n];
                        for (g, &bv) in group[r * n..(r + 1) * n].iter_mut().zip(brow) {
                            *g += av * bv;
                        }
                    }
                }
            }
            let shift = bits * s as u32;
            for (o, &g) in out.iter_mut().zip(&group) {
                *o = o.wrapping_add((g as u64).wrapping_shl(shift));
            }
        }
        start = end;
    }
    Ok((RingTensor::new(vec![m, n], out)?, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const EDGES: [u64; 6] = [0, 1, 2, 1 << 32, 1 << 63, u64::MAX];

    #[test]
    fn pinned_examples() {
        for mode in [DecompositionMode::FourX16, DecompositionMode::ThreeX22] {
            let r = |a: u64, b: u64| decomposed_mul(RingElement(a), RingElement(b), mode).0;
            assert_eq!(r(0, 12345), 0);
            assert_eq!(r(1 << 32, 1 << 32), 0);
        }
    }

    #[test]
    fn edge_values_match_wrapping_mul() {
        for mode in [DecompositionMode::FourX16, DecompositionMode::ThreeX22] {
            for &a in &EDGES {
                for &b in &EDGES {
                    assert_eq!(
                        decomposed_mul(RingElement(a), RingElement(b), mode).0,
                        a.wrapping_mul(b),
                        "{a} * {b} in {mode:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_matches_ring_matmul_in_both_modes() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for k in [6, 200] {
            let a = RingTensor::new(vec![4, k], (0..4 * k).map(|_| rng.gen()).collect()).unwrap();
            let b = RingTensor::new(vec![k, 3], (0..3 * k).map(|_| rng.gen()).collect()).unwrap();
            let want = a.matmul(&b).unwrap();
            let (got, used) = decomposed_matmul(&a, &b, DecompositionMode::FourX16).unwrap();
            assert_eq!((got, used), (want.clone(), DecompositionMode::FourX16));
            // Three full 22-bit products per shift fit 2^53 for at most 170 terms.
            let expect = if k < 170 {
                DecompositionMode::ThreeX22
            } else {
                DecompositionMode::FourX16
            };
            let (got, used) = decomposed_matmul(&a, &b, DecompositionMode::ThreeX22).unwrap();
            assert_eq!((got, used), (want, expect));
        }
    }

    #[test]
    fn three_x22_is_kept_for_small_limbs() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        // Values below 2^22 have a single nonzero limb.
        let a = RingTensor::new(vec![2, 5], (0..10).map(|_| rng.gen_range(0..1 << 20)).collect())
            .unwrap();
        let b = RingTensor::new(vec![5, 2], (0..10).map(|_| rng.gen_range(0..1 << 20)).collect())
            .unwrap();
        let (got, used) = decomposed_matmul(&a, &b, DecompositionMode::ThreeX22).unwrap();
        assert_eq!(used, DecompositionMode::ThreeX22);
        assert_eq!(got, a.matmul(&b).unwrap());
    }

    #[test]
    fn long_inner_dimension_is_chunked() {
        let k = 1 << 20;
        let a = RingTensor::filled(&[1, k], u64::MAX);
        let b = RingTensor::filled(&[k, 1], u64::MAX);
        let (got, _) = decomposed_matmul(&a, &b, DecompositionMode::FourX16).unwrap();
        assert_eq!(got.data(), &[k as u64]);
    }
}
