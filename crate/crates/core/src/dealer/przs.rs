use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::RingTensor;

/// Pseudorandom zero-sharing from two seeds: this party's own and its ring
/// predecessor's. Party `p` contributes `PRG(seed_p) - PRG(seed_{p-1})`, so
/// contributions cancel when summed over all parties, provided every party
/// draws the same number of words in the same order.
pub struct Przs {
    own: ChaCha20Rng,
    prev: ChaCha20Rng,
}

impl Przs {
    pub fn from_seeds(own: [u8; 32], prev: [u8; 32]) -> Self {
        Przs {
            own: ChaCha20Rng::from_seed(own),
            prev: ChaCha20Rng::from_seed(prev),
        }
    }

    /// Builds the generator from the 8 words the dealer hands out.
    pub fn from_words(words: &RingTensor) -> Result<Self> {
        if words.len() != 8 {
            return Err(Error::DealerUnavailable("malformed seed response".into()));
        }
        let seed = |ws: &[u64]| {
            let mut s = [0u8; 32];
            for (chunk, w) in s.chunks_exact_mut(8).zip(ws) {
                chunk.copy_from_slice(&w.to_le_bytes());
            }
            s
        };
        Ok(Self::from_seeds(
            seed(&words.data()[..4]),
            seed(&words.data()[4..]),
        ))
    }

    /// Additive zero-share of the given shape.
    pub fn zero_share(&mut self, dims: &[usize]) -> RingTensor {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| self.own.next_u64().wrapping_sub(self.prev.next_u64()))
            .collect();
        RingTensor::new(dims.to_vec(), data).expect("dims match length")
    }

    /// XOR zero-share of the given shape.
    pub fn zero_xor_share(&mut self, dims: &[usize]) -> RingTensor {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| self.own.next_u64() ^ self.prev.next_u64())
            .collect();
        RingTensor::new(dims.to_vec(), data).expect("dims match length")
    }
}
