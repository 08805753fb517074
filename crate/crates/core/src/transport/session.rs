use std::time::Duration;

use crate::error::{Error, Result};
use crate::ring::RingTensor;

use super::{Frame, Metrics, Transport};

/// Strategy for all-gather based collectives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ReduceMode {
    /// Everyone sends to everyone: 1 round.
    #[default]
    Flat,
    /// Bruck-style doubling: `ceil(log2 P)` rounds, `P - 1` blocks sent.
    Tree,
}

const KIND_GATHER: u32 = 1;
const KIND_TREE: u32 = 2;
const KIND_BROADCAST: u32 = 3;
const KIND_EXCHANGE: u32 = 4;

/// One party's view of the computation: identity, transport and counters.
///
/// Every collective must be entered by all parties in the same order. Each
/// message carries a tag derived from the collective kind and a step counter
/// so that parties which diverge fail with [`Error::Desync`].
pub struct Session {
    transport: Box<dyn Transport>,
    metrics: Metrics,
    op_stack: Vec<String>,
    reduce_mode: ReduceMode,
    step: u32,
}

impl Session {
    pub fn new(transport: impl Transport + 'static) -> Self {
        Self::from_boxed(Box::new(transport))
    }

    pub fn from_boxed(transport: Box<dyn Transport>) -> Self {
        Session {
            transport,
            metrics: Metrics::default(),
            op_stack: Vec::new(),
            reduce_mode: ReduceMode::Flat,
            step: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn world_size(&self) -> usize {
        self.transport.world_size()
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn reset_metrics(&mut self) {
        self.metrics = Metrics::default();
    }

    pub fn reduce_mode(&self) -> ReduceMode {
        self.reduce_mode
    }

    pub fn set_reduce_mode(&mut self, mode: ReduceMode) {
        self.reduce_mode = mode;
    }

    pub fn set_recv_timeout(&mut self, timeout: Duration) {
        self.transport.set_recv_timeout(timeout);
    }

    /// Opens a named scope; rounds and bytes until the matching
    /// [`exit_op`](Self::exit_op) are attributed to it.
    pub fn enter_op(&mut self, name: &str) {
        self.metrics.per_op.entry(name.to_string()).or_default().calls += 1;
        self.op_stack.push(name.to_string());
    }

    pub fn exit_op(&mut self) {
        self.op_stack.pop();
    }

    fn account(&mut self, rounds: u64, bytes: u64) {
        self.metrics.rounds += rounds;
        self.metrics.bytes_sent += bytes;
        let mut seen: Vec<&str> = Vec::with_capacity(self.op_stack.len());
        for name in &self.op_stack {
            if seen.contains(&name.as_str()) {
                continue;
            }
            seen.push(name);
            let s = self.metrics.per_op.get_mut(name).expect("entered op");
            s.rounds += rounds;
            s.bytes_sent += bytes;
        }
    }

    /// One synchronized step: send every frame, then receive one frame from
    /// each listed peer. Counts as a single round.
    fn round(
        &mut self,
        kind: u32,
        sends: Vec<(usize, RingTensor)>,
        recvs: &[usize],
    ) -> Result<Vec<RingTensor>> {
        if sends.is_empty() && recvs.is_empty() {
            return Ok(Vec::new());
        }
        self.step = self.step.wrapping_add(1);
        let tag = (kind << 24) | (self.step & 0x00ff_ffff);
        let mut bytes = 0;
        for (to, t) in sends {
            bytes += self.transport.send(to, &Frame::words(tag, t))? as u64;
        }
        let mut out = Vec::with_capacity(recvs.len());
        for &from in recvs {
            let frame = self.transport.recv(from)?;
            if frame.tag != tag {
                return Err(Error::Desync(format!(
                    "expected tag {tag:#x} from rank {from}, got {:#x}",
                    frame.tag
                )));
            }
            out.push(frame.into_tensor()?);
        }
        self.account(1, bytes);
        Ok(out)
    }

    /// Sends `sends` and receives from `recvs` as one round. Protocols with
    /// irregular communication patterns build on this.
    pub fn exchange(
        &mut self,
        sends: Vec<(usize, RingTensor)>,
        recvs: &[usize],
    ) -> Result<Vec<RingTensor>> {
        self.round(KIND_EXCHANGE, sends, recvs)
    }

    /// Every party's tensor, indexed by rank. All tensors must share dims.
    pub fn all_gather(&mut self, local: &RingTensor) -> Result<Vec<RingTensor>> {
        let (rank, n) = (self.rank(), self.world_size());
        if n == 1 {
            return Ok(vec![local.clone()]);
        }
        match self.reduce_mode {
            ReduceMode::Flat => {
                let peers: Vec<usize> = (0..n).filter(|&p| p != rank).collect();
                let sends = peers.iter().map(|&p| (p, local.clone())).collect();
                let received = self.round(KIND_GATHER, sends, &peers)?;
                let mut out = Vec::with_capacity(n);
                let mut it = received.into_iter();
                for p in 0..n {
                    let t = if p == rank {
                        local.clone()
                    } else {
                        it.next().expect("one frame per peer")
                    };
                    if t.dims() != local.dims() {
                        return Err(Error::shape(format!(
                            "rank {p} contributed {:?}, rank {rank} has {:?}",
                            t.dims(),
                            local.dims()
                        )));
                    }
                    out.push(t);
                }
                Ok(out)
            }
            ReduceMode::Tree => {
                // After the loop, `have[i]` is the block of rank (rank + i) mod n.
                let block = local.len();
                let mut have = local.data().to_vec();
                let mut d = 1;
                while have.len() < n * block {
                    let count = d.min(n - have.len() / block);
                    let to = (rank + n - d % n) % n;
                    let from = (rank + d) % n;
                    let payload = RingTensor::from_vec(have[..count * block].to_vec());
                    let got = self.round(KIND_TREE, vec![(to, payload)], &[from])?;
                    if got[0].len() != count * block {
                        return Err(Error::shape(format!(
                            "rank {from} sent {} words, expected {}",
                            got[0].len(),
                            count * block
                        )));
                    }
                    have.extend_from_slice(got[0].data());
                    d *= 2;
                }
                let mut out = vec![RingTensor::zeros(&[0]); n];
                for i in 0..n {
                    out[(rank + i) % n] = RingTensor::new(
                        local.dims().to_vec(),
                        have[i * block..(i + 1) * block].to_vec(),
                    )?;
                }
                Ok(out)
            }
        }
    }

    /// Sum modulo 2^64 of every party's tensor.
    pub fn all_reduce_sum(&mut self, local: &RingTensor) -> Result<RingTensor> {
        let parts = self.all_gather(local)?;
        let mut acc = RingTensor::zeros(local.dims());
        for p in &parts {
            acc.add_assign(p)?;
        }
        Ok(acc)
    }

    /// Bitwise XOR of every party's tensor.
    pub fn all_reduce_xor(&mut self, local: &RingTensor) -> Result<RingTensor> {
        let parts = self.all_gather(local)?;
        let mut acc = RingTensor::zeros(local.dims());
        for p in &parts {
            acc.xor_assign(p)?;
        }
        Ok(acc)
    }

    /// Distributes `value` from `src` to every party. Only `src` needs to
    /// supply a value; others pass `None`.
    pub fn broadcast(&mut self, src: usize, value: Option<&RingTensor>) -> Result<RingTensor> {
        let (rank, n) = (self.rank(), self.world_size());
        if src >= n {
            return Err(Error::InvalidSrc {
                src,
                world_size: n,
            });
        }
        if rank == src {
            let v = value.ok_or_else(|| Error::Config("broadcast source has no value".into()))?;
            let sends = (0..n).filter(|&p| p != rank).map(|p| (p, v.clone())).collect();
            self.round(KIND_BROADCAST, sends, &[])?;
            Ok(v.clone())
        } else {
            let mut got = self.round(KIND_BROADCAST, Vec::new(), &[src])?;
            Ok(got.pop().expect("one frame"))
        }
    }
}
