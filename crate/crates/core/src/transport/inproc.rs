use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::error::{Error, Result};

use super::{Frame, Transport, DEFAULT_RECV_TIMEOUT};

/// Channel mesh connecting parties that live in one process.
pub struct InProcessTransport {
    rank: usize,
    senders: Vec<Option<Sender<Frame>>>,
    receivers: Vec<Option<Receiver<Frame>>>,
    timeout: Duration,
}

impl InProcessTransport {
    /// Builds a fully connected mesh; element `p` belongs to rank `p`.
    pub fn mesh(world_size: usize) -> Vec<InProcessTransport> {
        let mut senders: Vec<Vec<Option<Sender<Frame>>>> =
            (0..world_size).map(|_| (0..world_size).map(|_| None).collect()).collect();
        let mut receivers: Vec<Vec<Option<Receiver<Frame>>>> =
            (0..world_size).map(|_| (0..world_size).map(|_| None).collect()).collect();
        for from in 0..world_size {
            for to in 0..world_size {
                if from != to {
                    let (tx, rx) = channel();
                    senders[from][to] = Some(tx);
                    receivers[to][from] = Some(rx);
                }
            }
        }
        senders
            .into_iter()
            .zip(receivers)
            .enumerate()
            .map(|(rank, (senders, receivers))| InProcessTransport {
                rank,
                senders,
                receivers,
                timeout: DEFAULT_RECV_TIMEOUT,
            })
            .collect()
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer == self.rank || peer >= self.senders.len() {
            return Err(Error::InvalidRank {
                rank: peer,
                world_size: self.senders.len(),
            });
        }
        Ok(())
    }
}

impl Transport for InProcessTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.senders.len()
    }

    fn send(&mut self, to: usize, frame: &Frame) -> Result<usize> {
        self.check_peer(to)?;
        let tx = self.senders[to].as_ref().expect("peer channel");
        tx.send(frame.clone())
            .map_err(|_| Error::PeerDisconnected(to))?;
        Ok(frame.encoded_len())
    }

    fn recv(&mut self, from: usize) -> Result<Frame> {
        self.check_peer(from)?;
        let rx = self.receivers[from].as_ref().expect("peer channel");
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Timeout(from),
            RecvTimeoutError::Disconnected => Error::PeerDisconnected(from),
        })
    }

    fn set_recv_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingTensor;

    #[test]
    fn ordered_delivery_and_empty_tensors() {
        let mut mesh = InProcessTransport::mesh(2);
        let mut b = mesh.pop().unwrap();
        let mut a = mesh.pop().unwrap();
        let first = Frame::words(1, RingTensor::from_vec(vec![1, 2, 3]));
        let second = Frame::words(2, RingTensor::zeros(&[0]));
        a.send(1, &first).unwrap();
        a.send(1, &second).unwrap();
        assert_eq!(b.recv(0).unwrap(), first);
        assert_eq!(b.recv(0).unwrap(), second);
    }

    #[test]
    fn dropped_peer_and_timeout_are_reported() {
        let mut mesh = InProcessTransport::mesh(3);
        let c = mesh.pop().unwrap();
        let mut b = mesh.pop().unwrap();
        let mut a = mesh.pop().unwrap();
        drop(c);
        assert!(matches!(a.recv(2), Err(Error::PeerDisconnected(2))));
        assert!(matches!(
            a.send(2, &Frame::bytes(0, vec![])),
            Err(Error::PeerDisconnected(2))
        ));
        b.set_recv_timeout(Duration::from_millis(10));
        assert!(matches!(b.recv(0), Err(Error::Timeout(0))));
        assert!(matches!(a.send(0, &Frame::bytes(0, vec![])), Err(Error::InvalidRank { .. })));
    }
}
