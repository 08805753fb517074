//! Arithmetic over the ring Z/2^64.
//!
//! Every share in the engine lives in this ring. Addition, subtraction and
//! multiplication wrap; the signed view (two's complement) is only used when
//! decoding fixed-point values or dividing shares.

mod decompose;
pub(crate) mod fixed;
mod linalg;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub use decompose::{decomposed_matmul, decomposed_mul, DecompositionMode};
pub use fixed::{FixedPointEncoder, DEFAULT_PRECISION_BITS};
pub use linalg::Conv2dParams;

/// Number of bits in a ring element.
pub const RING_BITS: u32 = 64;

/// A single element of Z/2^64.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);

    /// Two's-complement view of the element.
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    pub fn from_signed(v: i64) -> Self {
        RingElement(v as u64)
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for RingElement {
    type Output = RingElement;
    fn add(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    fn sub(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    fn mul(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    fn neg(self) -> RingElement {
        RingElement(self.0.wrapping_neg())
    }
}

impl From<u64> for RingElement {
    fn from(v: u64) -> Self {
        RingElement(v)
    }
}

/// Row-major tensor of ring elements.
#[derive(Clone, PartialEq, Eq)]
pub struct RingTensor {
    dims: Vec<usize>,
    data: Vec<u64>,
}

impl fmt::Debug for RingTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingTensor")
            .field("dims", &self.dims)
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn numel(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl RingTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u64>) -> Result<Self> {
        if numel(&dims) != data.len() {
            return Err(Error::shape(format!(
                "dims {:?} need {} elements, got {}",
                dims,
                numel(&dims),
                data.len()
            )));
        }
        Ok(RingTensor { dims, data })
    }

    /// One-dimensional tensor owning `data`.
    pub fn from_vec(data: Vec<u64>) -> Self {
        RingTensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn from_signed(dims: Vec<usize>, values: &[i64]) -> Result<Self> {
        Self::new(dims, values.iter().map(|&v| v as u64).collect())
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, 0)
    }

    pub fn filled(dims: &[usize], value: u64) -> Self {
        RingTensor {
            dims: dims.to_vec(),
            data: vec![value; numel(dims)],
        }
    }

    pub fn scalar(value: u64) -> Self {
        RingTensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: usize) -> RingElement {
        RingElement(self.data[index])
    }

    pub fn to_signed(&self) -> Vec<i64> {
        self.data.iter().map(|&v| v as i64).collect()
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        if numel(dims) != self.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(RingTensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn into_reshaped(self, dims: &[usize]) -> Result<Self> {
        if numel(dims) != self.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(RingTensor {
            dims: dims.to_vec(),
            data: self.data,
        })
    }

    fn check_same_dims(&self, other: &RingTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> Self {
        RingTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &RingTensor, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(RingTensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, u64::wrapping_add)
    }

    pub fn sub(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, u64::wrapping_sub)
    }

    pub fn mul(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, u64::wrapping_mul)
    }

    pub fn xor(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn and(&self, other: &RingTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn neg(&self) -> Self {
        self.map(u64::wrapping_neg)
    }

    pub fn scale(&self, k: u64) -> Self {
        self.map(|v| v.wrapping_mul(k))
    }

    pub fn add_assign(&mut self, other: &RingTensor) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = a.wrapping_add(b);
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &RingTensor) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = a.wrapping_sub(b);
        }
        Ok(())
    }

    pub fn xor_assign(&mut self, other: &RingTensor) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a ^= b;
        }
        Ok(())
    }

    /// Concatenates the flattened contents of `parts` into one 1-D tensor.
    pub fn concat_flat(parts: &[&RingTensor]) -> Self {
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        RingTensor::from_vec(data)
    }

    /// Splits a flat buffer back into tensors with the given shapes.
    pub fn split_flat(&self, shapes: &[&[usize]]) -> Result<Vec<RingTensor>> {
        let total: usize = shapes.iter().map(|d| numel(d)).sum();
        if total != self.len() {
            return Err(Error::shape(format!(
                "cannot split {} elements into {} ",
                self.len(),
                total
            )));
        }
        let mut out = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for dims in shapes {
            let n = numel(dims);
            out.push(RingTensor {
                dims: dims.to_vec(),
                data: self.data[offset..offset + n].to_vec(),
            });
            offset += n;
        }
        Ok(out)
    }

    /// Concatenates tensors along the leading dimension.
    pub fn cat0(parts: &[&RingTensor]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let tail = &first.dims[1.min(first.dims.len())..];
        let mut lead = 0;
        for p in parts {
            if p.dims.is_empty() || &p.dims[1..] != tail {
                return Err(Error::shape(format!(
                    "cannot concatenate {:?} with {:?}",
                    p.dims, first.dims
                )));
            }
            lead += p.dims[0];
        }
        let mut dims = vec![lead];
        dims.extend_from_slice(tail);
        let mut data = Vec::with_capacity(numel(&dims));
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        RingTensor::new(dims, data)
    }

    /// Number of rows and length of the last dimension when the tensor is
    /// viewed as a matrix `[rows, last]`.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.dims.last() {
            None => (1, 1),
            Some(&0) => (0, 0),
            Some(&last) => (self.len() / last, last),
        }
    }

    /// Sums over the last dimension, dropping it.
    pub fn sum_last(&self) -> Self {
        let (rows, cols) = self.rows_cols();
        let mut data = Vec::with_capacity(rows);
        for r in 0..rows {
            data.push(
                self.data[r * cols..(r + 1) * cols]
                    .iter()
                    .fold(0u64, |acc, &v| acc.wrapping_add(v)),
            );
        }
        let mut dims = self.dims.clone();
        dims.pop();
        if dims.is_empty() {
            dims.push(1);
        }
        RingTensor { dims, data }
    }

    /// Inclusive cumulative sum along the last dimension.
    pub fn cumsum_last(&self) -> Self {
        let (rows, cols) = self.rows_cols();
        let mut data = self.data.clone();
        for r in 0..rows {
            for c in 1..cols {
                let i = r * cols + c;
                data[i] = data[i].wrapping_add(data[i - 1]);
            }
        }
        RingTensor {
            dims: self.dims.clone(),
            data,
        }
    }

    /// Repeats each element `n` times along a new trailing dimension.
    pub fn repeat_last(&self, n: usize) -> Self {
        let mut dims = self.dims.clone();
        dims.push(n);
        let mut data = Vec::with_capacity(self.len() * n);
        for &v in &self.data {
            data.extend(std::iter::repeat(v).take(n));
        }
        RingTensor { dims, data }
    }

    /// Adds a vector of length `last` to every row.
    pub fn add_row_vector(&self, row: &RingTensor) -> Result<Self> {
        let (rows, cols) = self.rows_cols();
        if row.len() != cols {
            return Err(Error::shape(format!(
                "row vector of {} against rows of {}",
                row.len(),
                cols
            )));
        }
        let mut out = self.clone();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                out.data[i] = out.data[i].wrapping_add(row.data[c]);
            }
        }
        Ok(out)
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        if self.dims.len() != 2 {
            return Err(Error::shape(format!(
                "transpose needs a matrix, got {:?}",
                self.dims
            )));
        }
        let (r, c) = (self.dims[0], self.dims[1]);
        let mut data = vec![0u64; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(RingTensor {
            dims: vec![c, r],
            data,
        })
    }

    /// Selects a contiguous range of rows (leading dimension).
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let lead = *self.dims.first().ok_or(Error::EmptyInput)?;
        if start > end || end > lead {
            return Err(Error::shape(format!(
                "row range {start}..{end} out of {lead}"
            )));
        }
        let stride = if lead == 0 { 0 } else { self.len() / lead };
        let mut dims = self.dims.clone();
        dims[0] = end - start;
        Ok(RingTensor {
            dims,
            data: self.data[start * stride..end * stride].to_vec(),
        })
    }

    pub fn matmul(&self, rhs: &RingTensor) -> Result<Self> {
        linalg::matmul(self, rhs)
    }

    pub fn conv2d(&self, weight: &RingTensor, params: Conv2dParams) -> Result<Self> {
        linalg::conv2d(self, weight, params)
    }
}

pub use linalg::{col2im, conv_output_hw, im2col};
