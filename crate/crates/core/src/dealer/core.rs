use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ring::{numel, RingTensor};

use super::{CorrelationSource, Request, TripleOp};

struct Pending {
    request: Request,
    shares: Vec<Option<Vec<RingTensor>>>,
    remaining: usize,
}

/// Generates correlations and keeps each step's dealing until every party
/// has collected its shares.
pub struct DealerCore {
    world_size: usize,
    master_seed: u64,
    pending: Mutex<HashMap<u64, Pending>>,
}

impl DealerCore {
    pub fn new(world_size: usize, master_seed: u64) -> Self {
        assert!(world_size >= 1, "world size must be positive");
        DealerCore {
            world_size,
            master_seed,
            pending: Mutex::new(HashMap::new()),
        }
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    /// Party `rank`'s shares for `step`.
    pub fn fetch(&self, rank: usize, step: u64, request: &Request) -> Result<Vec<RingTensor>> {
        if rank >= self.world_size {
            return Err(Error::InvalidRank {
                rank,
                world_size: self.world_size,
            });
        }
        let mut pending = self.pending.lock().expect("dealer lock");
        if !pending.contains_key(&step) {
            let shares = self.deal(step, request)?;
            pending.insert(
                step,
                Pending {
                    request: request.clone(),
                    shares: shares.into_iter().map(Some).collect(),
                    remaining: self.world_size,
                },
            );
        }
        let entry = pending.get_mut(&step).expect("inserted above");
        if &entry.request != request {
            return Err(Error::Desync(format!(
                "dealer step {step}: rank {rank} asked for {request:?}, another party for {:?}",
                entry.request
            )));
        }
        let mine = entry.shares[rank].take().ok_or_else(|| {
            Error::Desync(format!("rank {rank} fetched dealer step {step} twice"))
        })?;
        entry.remaining -= 1;
        if entry.remaining == 0 {
            pending.remove(&step);
        }
        Ok(mine)
    }

    /// Every party's shares for `step`, indexed by rank. Deterministic in
    /// the master seed, the step and the request.
    pub fn deal(&self, step: u64, request: &Request) -> Result<Vec<Vec<RingTensor>>> {
        let dims = request.response_dims()?;
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(step);
        let n = self.world_size;
        let per_output: Vec<Vec<RingTensor>> = match request {
            Request::Triple { op, .. } => {
                let a = uniform(&mut rng, &dims[0]);
                let b = uniform(&mut rng, &dims[1]);
                let c = match op {
                    TripleOp::Mul => a.mul(&b)?,
                    TripleOp::MatMul => a.matmul(&b)?,
                    TripleOp::Conv2d(p) => a.conv2d(&b, *p)?,
                };
                vec![
                    split_add(&mut rng, &a, n),
                    split_add(&mut rng, &b, n),
                    split_add(&mut rng, &c, n),
                ]
            }
            Request::Square { .. } => {
                let a = uniform(&mut rng, &dims[0]);
                let b = a.mul(&a)?;
                vec![split_add(&mut rng, &a, n), split_add(&mut rng, &b, n)]
            }
            Request::BinaryTriple { .. } => {
                let a = uniform(&mut rng, &dims[0]);
                let b = uniform(&mut rng, &dims[0]);
                let c = a.and(&b)?;
                vec![
                    split_xor(&mut rng, &a, n),
                    split_xor(&mut rng, &b, n),
                    split_xor(&mut rng, &c, n),
                ]
            }
            Request::BitPairs { bits, .. } => {
                let bits = *bits as usize;
                let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
                let words = uniform(&mut rng, &dims[0]).map(|w| w & mask);
                let mut each = Vec::with_capacity(words.len() * bits);
                for &w in words.data() {
                    each.extend((0..bits).map(|k| (w >> k) & 1));
                }
                let each = RingTensor::new(dims[1].clone(), each)?;
                vec![split_xor(&mut rng, &words, n), split_add(&mut rng, &each, n)]
            }
            Request::WrapPair { .. } => {
                let r = uniform(&mut rng, &dims[0]);
                let shares = split_add(&mut rng, &r, n);
                let theta = RingTensor::new(
                    dims[0].clone(),
                    (0..r.len())
                        .map(|i| {
                            let parts = shares.iter().map(|s| s.data()[i]);
                            wrap_count(parts, r.data()[i]) as u64
                        })
                        .collect(),
                )?;
                vec![shares, split_add(&mut rng, &theta, n)]
            }
            Request::PrzsSeeds => {
                let seeds: Vec<[u64; 4]> = (0..n)
                    .map(|_| std::array::from_fn(|_| rng.next_u64()))
                    .collect();
                let per_party = (0..n)
                    .map(|p| {
                        let prev = (p + n - 1) % n;
                        let mut words = seeds[p].to_vec();
                        words.extend_from_slice(&seeds[prev]);
                        RingTensor::from_vec(words)
                    })
                    .collect();
                vec![per_party]
            }
        };
        Ok((0..n)
            .map(|p| per_output.iter().map(|o| o[p].clone()).collect())
            .collect())
    }
}

/// `(sum of signed shares - signed value) / 2^64`, exact.
pub(crate) fn wrap_count(shares: impl Iterator<Item = u64>, value: u64) -> i64 {
    let sum: i128 = shares.map(|s| s as i64 as i128).sum();
    ((sum - value as i64 as i128) >> 64) as i64
}

fn uniform(rng: &mut ChaCha20Rng, dims: &[usize]) -> RingTensor {
    let data = (0..numel(dims)).map(|_| rng.gen()).collect();
    RingTensor::new(dims.to_vec(), data).expect("dims match length")
}

fn split_add(rng: &mut ChaCha20Rng, value: &RingTensor, n: usize) -> Vec<RingTensor> {
    let mut shares: Vec<RingTensor> = (1..n).map(|_| uniform(rng, value.dims())).collect();
    let mut last = value.clone();
    for s in &shares {
        last.sub_assign(s).expect("same dims");
    }
    shares.push(last);
    shares
}

fn split_xor(rng: &mut ChaCha20Rng, value: &RingTensor, n: usize) -> Vec<RingTensor> {
    let mut shares: Vec<RingTensor> = (1..n).map(|_| uniform(rng, value.dims())).collect();
    let mut last = value.clone();
    for s in &shares {
        last.xor_assign(s).expect("same dims");
    }
    shares.push(last);
    shares
}

/// A party's handle on a dealer running in the same process.
pub struct InProcessDealer {
    core: Arc<DealerCore>,
    rank: usize,
}

impl InProcessDealer {
    pub fn new(core: Arc<DealerCore>, rank: usize) -> Self {
        InProcessDealer { core, rank }
    }
}

impl CorrelationSource for InProcessDealer {
    fn fetch(&mut self, step: u64, request: &Request) -> Result<Vec<RingTensor>> {
        self.core.fetch(self.rank, step, request)
    }
}
