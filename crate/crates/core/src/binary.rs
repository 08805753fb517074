//! XOR sharing: bitwise logic and ring addition as a circuit.

use crate::dealer::{BeaverTriple, Request};
use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{FixedPointEncoder, RingTensor};
use crate::shares::BinShare;

/// How several binary-shared ring values are summed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SumMode {
    /// Pairwise reduction: `ceil(log2 n)` adder layers.
    #[default]
    Tree,
    /// Sequential fold: `n - 1` adder layers, one running sum in memory.
    LowMemory,
}

/// AND rounds of one ring addition.
pub const ADDER_ROUNDS: u64 = 6;

impl Party {
    /// XOR-shares `value` held by `src`.
    pub fn share_bin(
        &mut self,
        src: usize,
        value: Option<&RingTensor>,
        encoder: FixedPointEncoder,
    ) -> Result<BinShare> {
        let masked = self.share(src, value, encoder)?;
        // Reuse the dims broadcast; replace the additive mask with a XOR one.
        let mut share = self.przs().zero_xor_share(masked.dims());
        if self.rank() == src {
            share.xor_assign(value.expect("source value"))?;
        }
        Ok(BinShare::new(share, encoder))
    }

    /// XOR of all shares (1 round).
    pub fn reveal_bin(&mut self, x: &BinShare) -> Result<RingTensor> {
        self.op("reveal", |p| p.session_mut().all_reduce_xor(x.share()))
    }

    /// XOR with a public tensor (rank 0 only; 0 rounds).
    pub fn xor_public(&self, x: &BinShare, value: &RingTensor) -> Result<BinShare> {
        if value.dims() != x.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), value.dims())));
        }
        if self.rank() == 0 {
            Ok(BinShare::new(x.share().xor(value)?, x.encoder()))
        } else {
            Ok(x.clone())
        }
    }

    /// Bitwise complement.
    pub fn not(&self, x: &BinShare) -> BinShare {
        if self.rank() == 0 {
            BinShare::new(x.share().map(|w| !w), x.encoder())
        } else {
            x.clone()
        }
    }

    /// Bitwise AND (1 round).
    pub fn and(&mut self, x: &BinShare, y: &BinShare) -> Result<BinShare> {
        if x.dims() != y.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), y.dims())));
        }
        let mut out = self.op("and", |p| p.and_batch(&[(x.share(), y.share())]))?;
        Ok(BinShare::new(out.pop().expect("one result"), x.encoder()))
    }

    /// Several independent ANDs evaluated in a single round.
    pub(crate) fn and_batch(
        &mut self,
        pairs: &[(&RingTensor, &RingTensor)],
    ) -> Result<Vec<RingTensor>> {
        let lhs: Vec<&RingTensor> = pairs.iter().map(|p| p.0).collect();
        let rhs: Vec<&RingTensor> = pairs.iter().map(|p| p.1).collect();
        let x = RingTensor::concat_flat(&lhs);
        let y = RingTensor::concat_flat(&rhs);
        if x.len() != y.len() {
            return Err(Error::shape("AND operands differ in size"));
        }
        let t = BeaverTriple::from_parts(self.fetch(Request::BinaryTriple {
            dims: vec![x.len()],
        })?);
        let both = RingTensor::concat_flat(&[&x.xor(&t.a)?, &y.xor(&t.b)?]);
        let opened = self.op("beaver_open", |p| p.session_mut().all_reduce_xor(&both))?;
        let n = x.len();
        let (eps, delta) = opened.data().split_at(n);
        let (a, b, c) = (t.a.data(), t.b.data(), t.c.data());
        let first = self.rank() == 0;
        let z: Vec<u64> = (0..n)
            .map(|i| {
                let mut v = c[i] ^ (eps[i] & b[i]) ^ (a[i] & delta[i]);
                if first {
                    v ^= eps[i] & delta[i];
                }
                v
            })
            .collect();
        let shapes: Vec<&[usize]> = lhs.iter().map(|t| t.dims()).collect();
        RingTensor::from_vec(z).split_flat(&shapes)
    }

    /// Ring addition of two binary-shared values (6 AND rounds).
    pub fn add_ring(&mut self, x: &BinShare, y: &BinShare) -> Result<BinShare> {
        if x.dims() != y.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), y.dims())));
        }
        let sum = self.op("add_ring", |p| p.adder(x.share(), y.share()))?;
        Ok(BinShare::new(sum, x.encoder()))
    }

    /// Parallel-prefix adder.
    ///
    /// A carry segment maps an incoming carry `c` to `P ? c : V`. A single
    /// bit has `P = x ^ y` and `V = x` (when the bits agree the carry out is
    /// their common value), so leaves need no AND. Segments compose as
    /// `P = P_hi & P_lo`, `V = V_hi ^ P_hi & (V_lo ^ V_hi)`. Leaf `i` sits at
    /// position `i + 1` and position 0 holds the zero carry-in (`P = 0`,
    /// `V = 0`), so after six doubling levels position `m` holds the carry
    /// into bit `m`. Bit 63's carry out is dropped.
    fn adder(&mut self, x: &RingTensor, y: &RingTensor) -> Result<RingTensor> {
        let first = self.rank() == 0;
        let p = x.xor(y)?;
        let mut prop = p.map(|v| v << 1);
        let mut val = x.map(|v| v << 1);
        for level in 0..ADDER_ROUNDS as u32 {
            let d = 1u32 << level;
            let upper = u64::MAX << d;
            let last = level + 1 == ADDER_ROUNDS as u32;
            let w = val.map(|v| ((v << d) ^ v) & upper);
            if last {
                let mut out = self.and_batch(&[(&prop, &w)])?;
                val.xor_assign(&out.pop().expect("one result"))?;
            } else {
                // Positions below `d` have no partner: AND with public ones.
                let b = prop.map(|v| if first { (v << d) ^ !upper } else { v << d });
                let mut out = self.and_batch(&[(&prop, &w), (&prop, &b)])?;
                prop = out.pop().expect("two results");
                val.xor_assign(&out.pop().expect("two results"))?;
            }
        }
        p.xor(&val)
    }

    /// Sum of binary-shared ring values.
    pub fn sum_ring(&mut self, xs: &[BinShare], mode: SumMode) -> Result<BinShare> {
        let first = xs.first().ok_or(Error::EmptyInput)?;
        for x in xs {
            if x.dims() != first.dims() {
                return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), first.dims())));
            }
        }
        let parts: Vec<RingTensor> = xs.iter().map(|x| x.share().clone()).collect();
        let sum = self.op("sum_ring", |p| p.sum_ring_raw(parts, mode))?;
        Ok(BinShare::new(sum, first.encoder()))
    }

    pub(crate) fn sum_ring_raw(
        &mut self,
        mut parts: Vec<RingTensor>,
        mode: SumMode,
    ) -> Result<RingTensor> {
        match mode {
            SumMode::LowMemory => {
                let mut acc = parts.remove(0);
                for x in &parts {
                    acc = self.adder(&acc, x)?;
                }
                Ok(acc)
            }
            SumMode::Tree => {
                while parts.len() > 1 {
                    let pairs = parts.len() / 2;
                    let lhs: Vec<&RingTensor> = (0..pairs).map(|i| &parts[2 * i]).collect();
                    let rhs: Vec<&RingTensor> = (0..pairs).map(|i| &parts[2 * i + 1]).collect();
                    let summed = self.adder(
                        &RingTensor::concat_flat(&lhs),
                        &RingTensor::concat_flat(&rhs),
                    )?;
                    let shapes: Vec<&[usize]> = lhs.iter().map(|t| t.dims()).collect();
                    let mut next = summed.split_flat(&shapes)?;
                    if parts.len() % 2 == 1 {
                        next.push(parts.pop().expect("odd leftover"));
                    }
                    parts = next;
                }
                Ok(parts.pop().expect("non-empty"))
            }
        }
    }
}
