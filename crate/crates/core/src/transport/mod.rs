//! Rank-addressed message passing and the collective operations built on it.

mod frame;
mod inproc;
mod metrics;
mod session;
mod tcp;

use std::time::Duration;

use crate::error::Result;

pub use frame::{Frame, Payload};
pub use inproc::InProcessTransport;
pub use metrics::{Metrics, OpStats};
pub use session::{ReduceMode, Session};
pub use tcp::TcpTransport;

/// How long a blocking receive waits before reporting a timeout.
pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(120);

/// Point-to-point, ordered, reliable delivery between ranks.
///
/// `send` must not block on the receiver draining its queue, so that every
/// party can send before it receives within one round.
pub trait Transport: Send {
    fn rank(&self) -> usize;
    fn world_size(&self) -> usize;
    /// Sends a frame and returns the number of encoded bytes.
    fn send(&mut self, to: usize, frame: &Frame) -> Result<usize>;
    fn recv(&mut self, from: usize) -> Result<Frame>;
    fn set_recv_timeout(&mut self, timeout: Duration);
}
