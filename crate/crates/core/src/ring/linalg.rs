use crate::error::{Error, Result};

use super::RingTensor;

/// Stride and zero padding of a 2-D convolution (square in both axes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Conv2dParams {
            stride: 1,
            padding: 0,
        }
    }
}

pub(crate) fn matmul(lhs: &RingTensor, rhs: &RingTensor) -> Result<RingTensor> {
    let (ld, rd) = (lhs.dims(), rhs.dims());
    if ld.len() != 2 || rd.len() != 2 || ld[1] != rd[0] {
        return Err(Error::shape(format!("matmul {ld:?} x {rd:?}")));
    }
    let (m, k, n) = (ld[0], ld[1], rd[1]);
    let (a, b) = (lhs.data(), rhs.data());
    let mut out = vec![0u64; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = o.wrapping_add(av.wrapping_mul(bv));
            }
        }
    }
    RingTensor::new(vec![m, n], out)
}

/// Output spatial size of a convolution or pooling window.
pub fn conv_output_hw(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    params: Conv2dParams,
) -> Result<(usize, usize)> {
    if params.stride == 0 {
        return Err(Error::shape("stride must be positive"));
    }
    let (ph, pw) = (h + 2 * params.padding, w + 2 * params.padding);
    if kh == 0 || kw == 0 || kh > ph || kw > pw {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} does not fit {h}x{w} with padding {}",
            params.padding
        )));
    }
    Ok(((ph - kh) / params.stride + 1, (pw - kw) / params.stride + 1))
}

fn dims4(t: &RingTensor, what: &str) -> Result<[usize; 4]> {
    match t.dims() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        other => Err(Error::shape(format!("{what} must be 4-D, got {other:?}"))),
    }
}

/// Direct convolution: input `[N, C, H, W]`, weight `[O, C, KH, KW]`,
/// output `[N, O, OH, OW]`.
pub(crate) fn conv2d(
    input: &RingTensor,
    weight: &RingTensor,
    params: Conv2dParams,
) -> Result<RingTensor> {
    let [n, c, h, w] = dims4(input, "conv input")?;
    let [o, wc, kh, kw] = dims4(weight, "conv weight")?;
    if wc != c {
        return Err(Error::shape(format!(
            "conv weight has {wc} input channels, input has {c}"
        )));
    }
    let (oh, ow) = conv_output_hw(h, w, kh, kw, params)?;
    let (x, k) = (input.data(), weight.data());
    let pad = params.padding as isize;
    let mut out = vec![0u64; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0u64;
                    for ic in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * params.stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * params.stride + kx) as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let kv = k[((oc * c + ic) * kh + ky) * kw + kx];
                                acc = acc.wrapping_add(xv.wrapping_mul(kv));
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    RingTensor::new(vec![n, o, oh, ow], out)
}

/// Unfolds `[N, C, H, W]` into patches `[N*OH*OW, C*KH*KW]`; padded
/// positions are zero.
pub fn im2col(
    input: &RingTensor,
    kh: usize,
    kw: usize,
    params: Conv2dParams,
) -> Result<RingTensor> {
    let [n, c, h, w] = dims4(input, "im2col input")?;
    let (oh, ow) = conv_output_hw(h, w, kh, kw, params)?;
    let x = input.data();
    let cols = c * kh * kw;
    let pad = params.padding as isize;
    let mut out = vec![0u64; n * oh * ow * cols];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (b * oh + oy) * ow + ox;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * params.stride + ky) as isize - pad;
                        for kx in 0..kw {
                            let ix = (ox * params.stride + kx) as isize - pad;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let col = (ic * kh + ky) * kw + kx;
                            out[row * cols + col] =
                                x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    RingTensor::new(vec![n * oh * ow, cols], out)
}

/// Adjoint of [`im2col`]: scatters patch values back, summing overlaps.
pub fn col2im(
    cols: &RingTensor,
    input_dims: [usize; 4],
    kh: usize,
    kw: usize,
    params: Conv2dParams,
) -> Result<RingTensor> {
    let [n, c, h, w] = input_dims;
    let (oh, ow) = conv_output_hw(h, w, kh, kw, params)?;
    let width = c * kh * kw;
    if cols.dims() != [n * oh * ow, width] {
        return Err(Error::shape(format!(
            "col2im expects [{}, {}], got {:?}",
            n * oh * ow,
            width,
            cols.dims()
        )));
    }
    let src = cols.data();
    let pad = params.padding as isize;
    let mut out = vec![0u64; n * c * h * w];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (b * oh + oy) * ow + ox;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * params.stride + ky) as isize - pad;
                        for kx in 0..kw {
                            let ix = (ox * params.stride + kx) as isize - pad;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((b * c + ic) * h + iy as usize) * w + ix as usize;
                            let col = (ic * kh + ky) * kw + kx;
                            out[dst] = out[dst].wrapping_add(src[row * width + col]);
                        }
                    }
                }
            }
        }
    }
    RingTensor::new(input_dims.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn big_mod(v: &BigInt) -> u64 {
        let q = BigInt::from(1u128 << 64);
        let r = ((v % &q) + &q) % &q;
        u64::try_from(r).unwrap()
    }

    #[test]
    fn scalar_matmul_is_wrapping_mul() {
        let a = RingTensor::new(vec![1, 1], vec![u64::MAX - 3]).unwrap();
        let b = RingTensor::new(vec![1, 1], vec![1 << 40]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[(u64::MAX - 3).wrapping_mul(1 << 40)]);
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = RingTensor::new(vec![3, 3], (0..9).map(|_| rng.gen()).collect()).unwrap();
        let mut eye = RingTensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1;
        }
        assert_eq!(x.matmul(&eye).unwrap(), x);
        assert_eq!(eye.matmul(&x).unwrap(), x);
    }

    #[test]
    fn matmul_matches_bigint_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a: Vec<u64> = (0..12).map(|_| rng.gen()).collect();
        let b: Vec<u64> = (0..8).map(|_| rng.gen()).collect();
        let got = RingTensor::new(vec![3, 4], a.clone())
            .unwrap()
            .matmul(&RingTensor::new(vec![4, 2], b.clone()).unwrap())
            .unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = BigInt::from(0);
                for k in 0..4 {
                    acc += BigInt::from(a[i * 4 + k]) * BigInt::from(b[k * 2 + j]);
                }
                assert_eq!(got.data()[i * 2 + j], big_mod(&acc));
            }
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = RingTensor::zeros(&[2, 3]);
        assert!(a.matmul(&RingTensor::zeros(&[2, 3])).is_err());
        assert!(a.matmul(&RingTensor::zeros(&[3])).is_err());
    }

    #[test]
    fn conv_matches_im2col_matmul() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let params = Conv2dParams {
            stride: 2,
            padding: 1,
        };
        let x = RingTensor::new(vec![2, 3, 5, 4], (0..120).map(|_| rng.gen()).collect()).unwrap();
        let w = RingTensor::new(vec![4, 3, 3, 2], (0..72).map(|_| rng.gen()).collect()).unwrap();
        let direct = x.conv2d(&w, params).unwrap();
        let (oh, ow) = conv_output_hw(5, 4, 3, 2, params).unwrap();
        let cols = im2col(&x, 3, 2, params).unwrap();
        let wmat = w.reshape(&[4, 18]).unwrap().transpose().unwrap();
        let prod = cols.matmul(&wmat).unwrap();
        for b in 0..2 {
            for oc in 0..4 {
                for p in 0..oh * ow {
                    assert_eq!(
                        direct.data()[(b * 4 + oc) * oh * ow + p],
                        prod.data()[(b * oh * ow + p) * 4 + oc]
                    );
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let params = Conv2dParams {
            stride: 1,
            padding: 1,
        };
        let x = RingTensor::new(vec![1, 2, 4, 4], (0..32).map(|_| rng.gen()).collect()).unwrap();
        let cols = im2col(&x, 3, 3, params).unwrap();
        let y = RingTensor::new(
            cols.dims().to_vec(),
            (0..cols.len()).map(|_| rng.gen()).collect(),
        )
        .unwrap();
        let lhs = cols.mul(&y).unwrap().data().iter().fold(0u64, |a, &v| a.wrapping_add(v));
        let back = col2im(&y, [1, 2, 4, 4], 3, 3, params).unwrap();
        let rhs = x.mul(&back).unwrap().data().iter().fold(0u64, |a, &v| a.wrapping_add(v));
        assert_eq!(lhs, rhs);
    }
}
