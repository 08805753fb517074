//! Trusted dealer issuing correlated randomness.
//!
//! Parties request correlations on demand, each tagged with a step counter
//! that advances identically at every party. The dealer generates the
//! correlation for a step once, from a stream of the master seed selected
//! by the step, and hands each party its own shares.

mod core;
mod przs;
mod remote;

use crate::error::{Error, Result};
use crate::ring::{Conv2dParams, RingTensor};

pub use self::core::{DealerCore, InProcessDealer};
pub(crate) use self::core::wrap_count;
pub use przs::Przs;
pub use remote::{serve_dealer, RemoteDealer};

/// Largest tensor the dealer will generate in one response.
const MAX_ELEMENTS: usize = 1 << 32;

/// Bilinear map `f` of a Beaver triple `c = f(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TripleOp {
    Mul,
    MatMul,
    Conv2d(Conv2dParams),
}

/// A correlation request. Every party must issue the same request for the
/// same step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Request {
    /// Arithmetic triple `c = f(a, b)`; `lhs`/`rhs` are the dims of `a`/`b`.
    Triple {
        op: TripleOp,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Arithmetic pair `(a, a^2)`.
    Square { dims: Vec<usize> },
    /// XOR-shared words `(a, b, a & b)`.
    BinaryTriple { dims: Vec<usize> },
    /// `bits` random bits per element, XOR-shared packed into one word and
    /// arithmetically shared one per bit along a trailing dimension.
    BitPairs { dims: Vec<usize>, bits: u32 },
    /// Uniform `r` and the wrap count of its (signed) shares.
    WrapPair { dims: Vec<usize> },
    /// Seeds for pseudorandom zero-sharing.
    PrzsSeeds,
}

/// Shares of a Beaver triple.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub a: RingTensor,
    pub b: RingTensor,
    pub c: RingTensor,
}

#[derive(Clone, Debug)]
pub struct SquarePair {
    pub a: RingTensor,
    pub b: RingTensor,
}

/// `r_bin` packs the XOR shares of bit `k` at position `k`; `r_arith` has a
/// trailing dimension holding the arithmetic share of each bit.
#[derive(Clone, Debug)]
pub struct BitPairs {
    pub r_bin: RingTensor,
    pub r_arith: RingTensor,
}

#[derive(Clone, Debug)]
pub struct WrapPair {
    pub r: RingTensor,
    pub theta_r: RingTensor,
}

/// Where a party obtains its correlated randomness.
pub trait CorrelationSource: Send {
    /// This party's shares of the correlation for `step`.
    fn fetch(&mut self, step: u64, request: &Request) -> Result<Vec<RingTensor>>;
}

impl Request {
    /// Dims of the tensors this request yields, in response order.
    pub(crate) fn response_dims(&self) -> Result<Vec<Vec<usize>>> {
        let dims = self.raw_response_dims()?;
        for d in &dims {
            let n = d.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x));
            if n.is_none_or(|n| n > MAX_ELEMENTS) {
                return Err(Error::shape(format!("refusing to deal {d:?}")));
            }
        }
        Ok(dims)
    }

    fn raw_response_dims(&self) -> Result<Vec<Vec<usize>>> {
        Ok(match self {
            Request::Triple { op, lhs, rhs } => {
                let out = triple_output_dims(*op, lhs, rhs)?;
                vec![lhs.clone(), rhs.clone(), out]
            }
            Request::Square { dims } => vec![dims.clone(), dims.clone()],
            Request::BinaryTriple { dims } => vec![dims.clone(); 3],
            Request::BitPairs { dims, bits } => {
                if *bits == 0 || *bits > 64 {
                    return Err(Error::shape(format!("cannot deal {bits} bits per word")));
                }
                let mut arith = dims.clone();
                arith.push(*bits as usize);
                vec![dims.clone(), arith]
            }
            Request::WrapPair { dims } => vec![dims.clone(), dims.clone()],
            Request::PrzsSeeds => vec![vec![8]],
        })
    }

    /// Flat word encoding used on the wire.
    pub(crate) fn to_words(&self) -> Vec<u64> {
        fn push_dims(out: &mut Vec<u64>, dims: &[usize]) {
            out.push(dims.len() as u64);
            out.extend(dims.iter().map(|&d| d as u64));
        }
        let mut out = Vec::new();
        match self {
            Request::Triple { op, lhs, rhs } => {
                out.push(0);
                match op {
                    TripleOp::Mul => out.extend([0, 0, 0]),
                    TripleOp::MatMul => out.extend([1, 0, 0]),
                    TripleOp::Conv2d(p) => out.extend([2, p.stride as u64, p.padding as u64]),
                }
                push_dims(&mut out, lhs);
                push_dims(&mut out, rhs);
            }
            Request::Square { dims } => {
                out.push(1);
                push_dims(&mut out, dims);
            }
            Request::BinaryTriple { dims } => {
                out.push(2);
                push_dims(&mut out, dims);
            }
            Request::BitPairs { dims, bits } => {
                out.push(3);
                push_dims(&mut out, dims);
                out.push(*bits as u64);
            }
            Request::WrapPair { dims } => {
                out.push(4);
                push_dims(&mut out, dims);
            }
            Request::PrzsSeeds => out.push(5),
        }
        out
    }

    pub(crate) fn from_words(words: &[u64]) -> Result<Request> {
        let bad = || Error::Frame("malformed dealer request".into());
        let mut it = words.iter().copied();
        let mut next = || it.next().ok_or_else(bad);
        fn dims(next: &mut dyn FnMut() -> Result<u64>) -> Result<Vec<usize>> {
            let n = next()?;
            if n > 32 {
                return Err(Error::Frame("too many dims in dealer request".into()));
            }
            (0..n).map(|_| next().map(|d| d as usize)).collect()
        }
        let req = match next()? {
            0 => {
                let (code, stride, padding) = (next()?, next()?, next()?);
                let op = match code {
                    0 => TripleOp::Mul,
                    1 => TripleOp::MatMul,
                    2 => TripleOp::Conv2d(Conv2dParams {
                        stride: stride as usize,
                        padding: padding as usize,
                    }),
                    _ => return Err(bad()),
                };
                let lhs = dims(&mut next)?;
                let rhs = dims(&mut next)?;
                Request::Triple { op, lhs, rhs }
            }
            1 => Request::Square {
                dims: dims(&mut next)?,
            },
            2 => Request::BinaryTriple {
                dims: dims(&mut next)?,
            },
            3 => {
                let d = dims(&mut next)?;
                Request::BitPairs {
                    dims: d,
                    bits: next()? as u32,
                }
            }
            4 => Request::WrapPair {
                dims: dims(&mut next)?,
            },
            5 => Request::PrzsSeeds,
            _ => return Err(bad()),
        };
        Ok(req)
    }
}

fn triple_output_dims(op: TripleOp, lhs: &[usize], rhs: &[usize]) -> Result<Vec<usize>> {
    match op {
        TripleOp::Mul => {
            if lhs != rhs {
                return Err(Error::shape(format!("mul triple {lhs:?} vs {rhs:?}")));
            }
            Ok(lhs.to_vec())
        }
        TripleOp::MatMul => {
            if lhs.len() != 2 || rhs.len() != 2 || lhs[1] != rhs[0] {
                return Err(Error::shape(format!("matmul triple {lhs:?} x {rhs:?}")));
            }
            Ok(vec![lhs[0], rhs[1]])
        }
        TripleOp::Conv2d(p) => {
            if lhs.len() != 4 || rhs.len() != 4 || lhs[1] != rhs[1] {
                return Err(Error::shape(format!("conv triple {lhs:?} vs {rhs:?}")));
            }
            let (oh, ow) = crate::ring::conv_output_hw(lhs[2], lhs[3], rhs[2], rhs[3], p)?;
            Ok(vec![lhs[0], rhs[0], oh, ow])
        }
    }
}

impl BeaverTriple {
    pub(crate) fn from_parts(mut v: Vec<RingTensor>) -> Self {
        let c = v.pop().expect("c");
        let b = v.pop().expect("b");
        let a = v.pop().expect("a");
        BeaverTriple { a, b, c }
    }
}

impl SquarePair {
    pub(crate) fn from_parts(mut v: Vec<RingTensor>) -> Self {
        let b = v.pop().expect("b");
        let a = v.pop().expect("a");
        SquarePair { a, b }
    }
}

impl BitPairs {
    pub(crate) fn from_parts(mut v: Vec<RingTensor>) -> Self {
        let r_arith = v.pop().expect("r_arith");
        let r_bin = v.pop().expect("r_bin");
        BitPairs { r_bin, r_arith }
    }
}

impl WrapPair {
    pub(crate) fn from_parts(mut v: Vec<RingTensor>) -> Self {
        let theta_r = v.pop().expect("theta_r");
        let r = v.pop().expect("r");
        WrapPair { r, theta_r }
    }
}
