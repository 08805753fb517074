//! Ring arithmetic recomputed with arbitrary-precision integers and reduced
//! modulo 2^64 only at the end.

use num_bigint::BigUint;

fn reduce(v: &BigUint) -> u64 {
    let m: BigUint = v % (BigUint::from(1u8) << 64u32);
    m.iter_u64_digits().next().unwrap_or(0)
}

pub fn sum(values: &[u64]) -> u64 {
    reduce(&values.iter().map(|&v| BigUint::from(v)).sum())
}

pub fn mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| reduce(&(BigUint::from(x) * BigUint::from(y))))
        .collect()
}

/// `[m, k] x [k, n]`.
pub fn matmul(a: &[u64], b: &[u64], m: usize, k: usize, n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let acc: BigUint = (0..k)
                .map(|t| BigUint::from(a[i * k + t]) * BigUint::from(b[t * n + j]))
                .sum();
            out.push(reduce(&acc));
        }
    }
    out
}

/// Convolution of `[n, c, h, w]` by `[o, c, kh, kw]` with zero padding.
pub fn conv2d(
    x: &[u64],
    xd: [usize; 4],
    k: &[u64],
    kd: [usize; 4],
    stride: usize,
    pad: usize,
) -> (Vec<u64>, [usize; 4]) {
    let [n, c, h, w] = xd;
    let [o, _, kh, kw] = kd;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Vec::new();
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = BigUint::from(0u8);
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let kv = k[((oc * c + ic) * kh + ky) * kw + kx];
                                acc += BigUint::from(xv) * BigUint::from(kv);
                            }
                        }
                    }
                    out.push(reduce(&acc));
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

/// Number of times the signed shares wrap around the ring:
/// `(sum of signed shares - signed total) / 2^64`.
pub fn wraps(shares: &[i64]) -> i64 {
    let exact: i128 = shares.iter().map(|&s| s as i128).sum();
    let total = shares.iter().fold(0i64, |a, &s| a.wrapping_add(s)) as i128;
    ((exact - total) >> 64) as i64
}
