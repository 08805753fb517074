use std::io::{BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

use super::{Frame, Transport, DEFAULT_RECV_TIMEOUT};

const RETRY_INTERVAL: Duration = Duration::from_millis(20);

/// Full TCP mesh. Rank `p` dials every lower rank and accepts every higher
/// one; each connection opens with the dialer's rank and world size.
///
/// Every connection gets a reader thread that decodes frames into a queue,
/// so sends never wait on the peer's application code.
pub struct TcpTransport {
    rank: usize,
    world_size: usize,
    writers: Vec<Option<TcpStream>>,
    receivers: Vec<Option<Receiver<Result<Frame>>>>,
    timeout: Duration,
}

impl TcpTransport {
    /// Binds `addrs[rank]` and connects to every other address.
    pub fn connect(rank: usize, addrs: &[SocketAddr], connect_timeout: Duration) -> Result<Self> {
        if rank >= addrs.len() {
            return Err(Error::InvalidRank {
                rank,
                world_size: addrs.len(),
            });
        }
        let listener = TcpListener::bind(addrs[rank])?;
        Self::with_listener(rank, listener, addrs, connect_timeout)
    }

    /// Like [`connect`](Self::connect) but with an already bound listener.
    pub fn with_listener(
        rank: usize,
        listener: TcpListener,
        addrs: &[SocketAddr],
        connect_timeout: Duration,
    ) -> Result<Self> {
        let world_size = addrs.len();
        if rank >= world_size {
            return Err(Error::InvalidRank { rank, world_size });
        }
        let deadline = Instant::now() + connect_timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..world_size).map(|_| None).collect();

        for (peer, addr) in addrs.iter().enumerate().take(rank) {
            let mut stream = dial(*addr, deadline)?;
            let mut hello = [0u8; 16];
            hello[..8].copy_from_slice(&(rank as u64).to_le_bytes());
            hello[8..].copy_from_slice(&(world_size as u64).to_le_bytes());
            stream.write_all(&hello)?;
            streams[peer] = Some(stream);
        }

        listener.set_nonblocking(true)?;
        let mut pending = world_size - 1 - rank;
        while pending > 0 {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(
                        deadline.saturating_duration_since(Instant::now()).max(RETRY_INTERVAL),
                    ))?;
                    let mut hello = [0u8; 16];
                    stream.read_exact(&mut hello)?;
                    stream.set_read_timeout(None)?;
                    let peer = u64::from_le_bytes(hello[..8].try_into().unwrap()) as usize;
                    let their_world = u64::from_le_bytes(hello[8..].try_into().unwrap()) as usize;
                    if their_world != world_size {
                        return Err(Error::Config(format!(
                            "peer {peer} expects world size {their_world}, we have {world_size}"
                        )));
                    }
                    if peer <= rank || peer >= world_size || streams[peer].is_some() {
                        return Err(Error::Config(format!("unexpected handshake from rank {peer}")));
                    }
                    streams[peer] = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Timeout(rank + 1));
                    }
                    thread::sleep(RETRY_INTERVAL);
                }
                Err(e) => return Err(e.into()),
            }
        }

        let mut writers = Vec::with_capacity(world_size);
        let mut receivers = Vec::with_capacity(world_size);
        for stream in streams {
            match stream {
                None => {
                    writers.push(None);
                    receivers.push(None);
                }
                Some(stream) => {
                    stream.set_nodelay(true)?;
                    let mut reader = stream.try_clone()?;
                    let (tx, rx) = channel();
                    thread::spawn(move || loop {
                        match Frame::read_from(&mut reader) {
                            Ok(Some(frame)) => {
                                if tx.send(Ok(frame)).is_err() {
                                    break;
                                }
                            }
                            Ok(None) => break,
                            Err(e) => {
                                let _ = tx.send(Err(e));
                                break;
                            }
                        }
                    });
                    writers.push(Some(stream));
                    receivers.push(Some(rx));
                }
            }
        }
        Ok(TcpTransport {
            rank,
            world_size,
            writers,
            receivers,
            timeout: DEFAULT_RECV_TIMEOUT,
        })
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer == self.rank || peer >= self.world_size {
            return Err(Error::InvalidRank {
                rank: peer,
                world_size: self.world_size,
            });
        }
        Ok(())
    }
}

fn dial(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect_timeout(&addr, RETRY_INTERVAL.max(Duration::from_millis(200))) {
            Ok(s) => return Ok(s),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(Error::Io(e));
                }
                thread::sleep(RETRY_INTERVAL);
            }
        }
    }
}

impl Transport for TcpTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.world_size
    }

    fn send(&mut self, to: usize, frame: &Frame) -> Result<usize> {
        self.check_peer(to)?;
        let stream = self.writers[to].as_ref().expect("peer stream");
        let mut w = BufWriter::new(stream);
        frame
            .write_to(&mut w)
            .map_err(|_| Error::PeerDisconnected(to))
    }

    fn recv(&mut self, from: usize) -> Result<Frame> {
        self.check_peer(from)?;
        let rx = self.receivers[from].as_ref().expect("peer queue");
        match rx.recv_timeout(self.timeout) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(Error::Io(_))) | Err(RecvTimeoutError::Disconnected) => {
                Err(Error::PeerDisconnected(from))
            }
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(from)),
        }
    }

    fn set_recv_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for s in self.writers.iter().flatten() {
            let _ = s.shutdown(Shutdown::Write);
        }
    }
}
