//! Conversions between arithmetic and binary sharing.

use crate::dealer::{BitPairs, Request};
use crate::error::{Error, Result};
use crate::party::Party;
use crate::ring::{FixedPointEncoder, RingTensor};
use crate::shares::{ArithShare, BinShare};

impl Party {
    /// Arithmetic to binary sharing.
    ///
    /// Every party's additive share becomes a binary-shared input (masked
    /// with pseudorandom XOR zero-shares, so distributing them is free) and
    /// the inputs are summed with the adder circuit: `ceil(log2 n) * 6`
    /// rounds in tree mode.
    pub fn a2b(&mut self, x: &ArithShare) -> Result<BinShare> {
        let mode = self.config().sum_mode;
        self.op("a2b", |p| {
            let n = p.world_size();
            if n == 1 {
                return Ok(BinShare::new(x.share().clone(), x.encoder()));
            }
            let rank = p.rank();
            let mut inputs = Vec::with_capacity(n);
            for owner in 0..n {
                let mut mine = p.przs().zero_xor_share(x.dims());
                if owner == rank {
                    mine.xor_assign(x.share())?;
                }
                inputs.push(mine);
            }
            let sum = p.sum_ring_raw(inputs, mode)?;
            Ok(BinShare::new(sum, x.encoder()))
        })
    }

    /// Converts the lowest `bits` bits of every element to an arithmetic
    /// sharing of `sum_k 2^k b_k` (1 round for any tensor size).
    ///
    /// Bit `k` is opened as `z_k = b_k ^ r_k` against a dealt random bit
    /// `r_k` held in both sharings, then `b_k = r_k + z_k - 2 z_k r_k`.
    pub fn b2a_bits(&mut self, x: &BinShare, bits: u32) -> Result<ArithShare> {
        if bits == 0 || bits > 64 {
            return Err(Error::Config(format!("cannot convert {bits} bits")));
        }
        self.op("b2a", |p| {
            let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
            let pairs = BitPairs::from_parts(p.fetch(Request::BitPairs {
                dims: x.dims().to_vec(),
                bits,
            })?);
            let masked = x.share().map(|w| w & mask).xor(&pairs.r_bin)?;
            let z = p.op("reveal_masked", |p| p.session_mut().all_reduce_xor(&masked))?;
            let first = p.rank() == 0;
            let bits = bits as usize;
            let r = pairs.r_arith.data();
            let out: Vec<u64> = z
                .data()
                .iter()
                .enumerate()
                .map(|(i, &zw)| {
                    let mut acc = 0u64;
                    for k in 0..bits {
                        let zk = (zw >> k) & 1;
                        let rk = r[i * bits + k];
                        // r + z - 2zr: flips the share when z = 1.
                        let mut bk = if zk == 1 { rk.wrapping_neg() } else { rk };
                        if first {
                            bk = bk.wrapping_add(zk);
                        }
                        acc = acc.wrapping_add(bk << k);
                    }
                    acc
                })
                .collect();
            Ok(ArithShare::new(
                RingTensor::new(x.dims().to_vec(), out)?,
                x.encoder(),
            ))
        })
    }

    /// Binary to arithmetic sharing of full 64-bit words (1 round).
    /// The result carries the encoder the bits were tagged with.
    pub fn b2a(&mut self, x: &BinShare) -> Result<ArithShare> {
        self.b2a_bits(x, 64)
    }

    /// Converts single bits (bit 0 of each element) to an integer-scale
    /// arithmetic sharing (1 round).
    pub fn bit_b2a(&mut self, x: &BinShare) -> Result<ArithShare> {
        let bits = BinShare::new(x.share().clone(), FixedPointEncoder::integer());
        self.b2a_bits(&bits, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::party::{simulate, PartyConfig};

    #[test]
    fn constant_pattern_and_roundtrip() {
        for n in 1..=4 {
            let out = simulate(n, 8, &PartyConfig::default(), |p| {
                let enc = FixedPointEncoder::integer();
                let bits = p.share_bin(0, Some(&RingTensor::from_vec(vec![0b101])), enc)?;
                let five = p.b2a(&bits)?;
                let x = p.share_f64(0, Some((&[3], &[-1.0, 0.0, 123.456])))?;
                let bits = p.a2b(&x)?;
                let back = p.b2a(&bits)?;
                Ok((p.reveal(&five)?, p.reveal(&x)?, p.reveal(&back)?))
            })
            .unwrap();
            for (five, x, back) in out {
                assert_eq!(five.data(), &[5]);
                assert_eq!(x, back);
            }
        }
    }
}
