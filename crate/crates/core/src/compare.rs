//! Comparisons, selection and maxima built on sign-bit extraction.
//!
//! Comparison results are integer-scale sharings of 0/1.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{im2col, Conv2dParams, FixedPointEncoder, RingTensor};
use crate::shares::ArithShare;

/// Strategy for locating the maximum of a vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ArgmaxMethod {
    /// Halving tournament: `ceil(log2 N)` comparison layers. Ties go to the
    /// right-hand candidate of each match.
    Tree,
    /// All pairwise differences at once: constant rounds, `N^2` work.
    /// Ties go to the first maximal element.
    #[default]
    Pairwise,
}

fn int() -> FixedPointEncoder {
    FixedPointEncoder::integer()
}

/// Columns `start..end` of every row of a `[rows, width, inner]` buffer.
fn take_cols(
    t: &RingTensor,
    rows: usize,
    width: usize,
    inner: usize,
    start: usize,
    end: usize,
) -> RingTensor {
    let mut data = Vec::with_capacity(rows * (end - start) * inner);
    for r in 0..rows {
        data.extend_from_slice(&t.data()[(r * width + start) * inner..(r * width + end) * inner]);
    }
    RingTensor::new(vec![rows, end - start, inner], data).expect("sizes agree")
}

/// Interleaves `[rows, a, inner]` and `[rows, b, inner]` into
/// `[rows, a + b, inner]`.
fn join_cols(x: &RingTensor, y: &RingTensor, rows: usize, inner: usize) -> RingTensor {
    let (a, b) = (x.len() / rows / inner, y.len() / rows / inner);
    let mut data = Vec::with_capacity(x.len() + y.len());
    for r in 0..rows {
        data.extend_from_slice(&x.data()[r * a * inner..(r + 1) * a * inner]);
        data.extend_from_slice(&y.data()[r * b * inner..(r + 1) * b * inner]);
    }
    RingTensor::new(vec![rows, a + b, inner], data).expect("sizes agree")
}

impl Party {
    /// `[x < 0]`: the sign bit of the binary sharing of `x`.
    pub fn ltz(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("ltz", |p| {
            let bits = p.a2b(x)?;
            p.bit_b2a(&bits.shr(63))
        })
    }

    /// `[x_i < 0]` for several tensors in one batched conversion.
    pub fn ltz_many(&mut self, xs: &[&ArithShare]) -> Result<Vec<ArithShare>> {
        let shares: Vec<&RingTensor> = xs.iter().map(|x| x.share()).collect();
        let flat = ArithShare::new(RingTensor::concat_flat(&shares), int());
        let bits = self.ltz(&flat)?;
        let shapes: Vec<&[usize]> = xs.iter().map(|x| x.dims()).collect();
        Ok(bits
            .share()
            .split_flat(&shapes)?
            .into_iter()
            .map(|s| ArithShare::new(s, int()))
            .collect())
    }

    /// `1 - b` for an integer-scale bit.
    fn not_bit(&self, b: &ArithShare) -> Result<ArithShare> {
        self.add_public(&b.neg(), &RingTensor::filled(b.dims(), 1))
    }

    pub fn lt(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("lt", |p| p.ltz(&x.sub(y)?))
    }

    pub fn gt(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("gt", |p| p.ltz(&y.sub(x)?))
    }

    pub fn le(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("le", |p| {
            let gt = p.ltz(&y.sub(x)?)?;
            p.not_bit(&gt)
        })
    }

    pub fn ge(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("ge", |p| {
            let lt = p.ltz(&x.sub(y)?)?;
            p.not_bit(&lt)
        })
    }

    /// `[x = y] = [x <= y] - [x < y]`, both comparisons in one batch.
    pub fn eq(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("eq", |p| {
            let ne = p.ne_inner(x, y)?;
            p.not_bit(&ne)
        })
    }

    pub fn ne(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("ne", |p| p.ne_inner(x, y))
    }

    fn ne_inner(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        let d = x.sub(y)?;
        let both = self.ltz_many(&[&d, &d.neg()])?;
        both[0].add(&both[1])
    }

    /// `x * [x > 0]`.
    pub fn relu(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("relu", |p| {
            let pos = p.ltz(&x.neg())?;
            p.mul(x, &pos)
        })
    }

    /// ReLU together with its 0/1 derivative mask.
    pub fn relu_with_mask(&mut self, x: &ArithShare) -> Result<(ArithShare, ArithShare)> {
        self.op("relu", |p| {
            let pos = p.ltz(&x.neg())?;
            Ok((p.mul(x, &pos)?, pos))
        })
    }

    /// `2 [x > 0] - 1` at integer scale; zero maps to -1.
    pub fn sign(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("sign", |p| {
            let pos = p.ltz(&x.neg())?;
            p.add_public(&pos.mul_int(2), &RingTensor::filled(x.dims(), u64::MAX))
        })
    }

    pub fn abs(&mut self, x: &ArithShare) -> Result<ArithShare> {
        self.op("abs", |p| {
            let s = p.sign(x)?;
            p.mul(x, &s)
        })
    }

    /// `c ? x : y = y + c (x - y)`; both branches are always evaluated.
    pub fn mux(&mut self, c: &ArithShare, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        self.op("mux", |p| {
            let d = x.sub(y)?;
            y.add(&p.mul(c, &d)?)
        })
    }

    /// Product with an integer-scale share; exact, no truncation needed.
    pub(crate) fn mul_by_int_raw(
        &mut self,
        ints: &RingTensor,
        other: &RingTensor,
    ) -> Result<RingTensor> {
        let ints = ArithShare::new(ints.clone(), int());
        let other = ArithShare::new(other.clone(), int());
        Ok(self.mul(&ints, &other)?.into_share())
    }

    /// One-hot mask of the maximum along the last dimension.
    pub fn argmax(&mut self, x: &ArithShare, method: ArgmaxMethod) -> Result<ArithShare> {
        self.op("argmax", |p| p.argmax_inner(x, method).map(|r| r.0))
    }

    /// `argmax(-x)`.
    pub fn argmin(&mut self, x: &ArithShare, method: ArgmaxMethod) -> Result<ArithShare> {
        self.op("argmin", |p| p.argmax_inner(&x.neg(), method).map(|r| r.0))
    }

    /// Maximum along the last dimension (which is dropped).
    pub fn max(&mut self, x: &ArithShare, method: ArgmaxMethod) -> Result<ArithShare> {
        self.op("max", |p| p.argmax_inner(x, method).map(|r| r.1))
    }

    pub fn min(&mut self, x: &ArithShare, method: ArgmaxMethod) -> Result<ArithShare> {
        self.op("min", |p| Ok(p.argmax_inner(&x.neg(), method)?.1.neg()))
    }

    /// Maximum together with the one-hot mask that selected it.
    pub fn max_with_argmax(
        &mut self,
        x: &ArithShare,
        method: ArgmaxMethod,
    ) -> Result<(ArithShare, ArithShare)> {
        self.op("max", |p| {
            let (mask, max) = p.argmax_inner(x, method)?;
            Ok((max, mask))
        })
    }

    fn argmax_inner(
        &mut self,
        x: &ArithShare,
        method: ArgmaxMethod,
    ) -> Result<(ArithShare, ArithShare)> {
        let (rows, n) = x.share().rows_cols();
        if n == 0 || x.dims().is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut out_dims = x.dims().to_vec();
        out_dims.pop();
        if out_dims.is_empty() {
            out_dims.push(1);
        }
        match method {
            ArgmaxMethod::Pairwise => {
                let onehot = self.argmax_pairwise(x, rows, n)?;
                let picked = self.mul(&onehot, x)?;
                let max = picked.sum_last().reshape(&out_dims)?;
                Ok((onehot, max))
            }
            ArgmaxMethod::Tree => {
                let (onehot, max) = self.argmax_tree(x, rows, n)?;
                Ok((onehot, max.reshape(&out_dims)?))
            }
        }
    }

    fn argmax_pairwise(&mut self, x: &ArithShare, rows: usize, n: usize) -> Result<ArithShare> {
        let s = x.share().data();
        let mut diffs = Vec::with_capacity(rows * n * n);
        for r in 0..rows {
            for i in 0..n {
                for j in 0..n {
                    diffs.push(s[r * n + i].wrapping_sub(s[r * n + j]));
                }
            }
        }
        let diffs = ArithShare::new(RingTensor::new(vec![rows, n, n], diffs)?, x.encoder());
        // [x_i >= x_j] summed over j counts n exactly at maximal i.
        let below = self.ltz(&diffs)?;
        let wins = self.not_bit(&below)?.sum_last();
        let minus_n = RingTensor::filled(wins.dims(), (n as u64).wrapping_neg());
        let short = self.add_public(&wins, &minus_n)?;
        let not_max = self.ltz(&short)?;
        let is_max = self.not_bit(&not_max)?;
        // Keep only the first maximal index: its running count is 1.
        let running = is_max.cumsum_last();
        let minus_two = RingTensor::filled(running.dims(), 2u64.wrapping_neg());
        let keep = self.ltz(&self.add_public(&running, &minus_two)?)?;
        let onehot = self.mul(&keep, &is_max)?;
        onehot.reshape(x.dims())
    }

    fn argmax_tree(
        &mut self,
        x: &ArithShare,
        rows: usize,
        n: usize,
    ) -> Result<(ArithShare, ArithShare)> {
        let mut vals = x.share().reshape(&[rows, n, 1])?;
        let mut masks = {
            let mut m = vec![0u64; rows * n * n];
            if self.rank() == 0 {
                for r in 0..rows {
                    for i in 0..n {
                        m[(r * n + i) * n + i] = 1;
                    }
                }
            }
            RingTensor::new(vec![rows, n, n], m)?
        };
        let mut k = n;
        while k > 1 {
            let h = k / 2;
            let left = take_cols(&vals, rows, k, 1, 0, h);
            let right = take_cols(&vals, rows, k, 1, h, 2 * h);
            let ml = take_cols(&masks, rows, k, n, 0, h);
            let mr = take_cols(&masks, rows, k, n, h, 2 * h);
            let diff = ArithShare::new(right.sub(&left)?, x.encoder());
            let pick = self.ltz(&diff)?.into_share();
            let pick_rep = pick.repeat_last(n);
            let lhs = RingTensor::concat_flat(&[&pick, &pick_rep]);
            let rhs = RingTensor::concat_flat(&[&left.sub(&right)?, &ml.sub(&mr)?]);
            let prod = self.mul_by_int_raw(&lhs, &rhs)?;
            let parts = prod.split_flat(&[&[rows, h, 1], &[rows, h, n]])?;
            let mut new_vals = right.add(&parts[0])?;
            let mut new_masks = mr.add(&parts[1])?;
            if k % 2 == 1 {
                new_vals = join_cols(&new_vals, &take_cols(&vals, rows, k, 1, k - 1, k), rows, 1);
                new_masks =
                    join_cols(&new_masks, &take_cols(&masks, rows, k, n, k - 1, k), rows, n);
            }
            vals = new_vals;
            masks = new_masks;
            k = h + k % 2;
        }
        Ok((
            ArithShare::new(masks.into_reshaped(x.dims())?, int()),
            ArithShare::new(vals.into_reshaped(&[rows])?, x.encoder()),
        ))
    }

    /// Max pooling of `[N, C, H, W]` with a square window and no padding.
    pub fn max_pool2d(&mut self, x: &ArithShare, kernel: usize, stride: usize) -> Result<ArithShare> {
        Ok(self.max_pool2d_with_mask(x, kernel, stride)?.0)
    }

    /// Pooled output and the per-window one-hot mask `[N*C*OH*OW, k*k]`.
    pub fn max_pool2d_with_mask(
        &mut self,
        x: &ArithShare,
        kernel: usize,
        stride: usize,
    ) -> Result<(ArithShare, ArithShare)> {
        let method = self.config().argmax;
        self.op("max_pool2d", |p| {
            let [n, c, h, w] = match x.dims() {
                &[a, b, c, d] => [a, b, c, d],
                other => return Err(Error::shape(format!("max_pool2d needs 4-D input, got {other:?}"))),
            };
            let params = Conv2dParams { stride, padding: 0 };
            let (oh, ow) = crate::ring::conv_output_hw(h, w, kernel, kernel, params)?;
            let planes = x.share().reshape(&[n * c, 1, h, w])?;
            let windows = ArithShare::new(im2col(&planes, kernel, kernel, params)?, x.encoder());
            let (max, mask) = p.max_with_argmax(&windows, method)?;
            Ok((max.reshape(&[n, c, oh, ow])?, mask))
        })
    }
}
