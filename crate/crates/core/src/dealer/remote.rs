use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ring::RingTensor;
use crate::transport::{Frame, Payload};

use super::{CorrelationSource, DealerCore, Request};

const TAG_HELLO: u32 = 0xDEA1_0000;
const TAG_REQUEST: u32 = 0xDEA1_0001;
const TAG_COUNT: u32 = 0xDEA1_0002;
const TAG_SHARE: u32 = 0xDEA1_0003;
const TAG_ERROR: u32 = 0xDEA1_0004;

const ERR_DESYNC: u8 = 1;
const ERR_SHAPE: u8 = 2;
const ERR_OTHER: u8 = 3;

/// Client side of a dealer reached over TCP.
pub struct RemoteDealer {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

fn unavailable(e: impl std::fmt::Display) -> Error {
    Error::DealerUnavailable(e.to_string())
}

impl RemoteDealer {
    /// Connects, retrying until `timeout` elapses, and announces the rank.
    pub fn connect(
        addr: SocketAddr,
        rank: usize,
        world_size: usize,
        timeout: Duration,
    ) -> Result<Self> {
        let deadline = Instant::now() + timeout;
        let stream = loop {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(200)) {
                Ok(s) => break s,
                Err(e) if Instant::now() >= deadline => return Err(unavailable(e)),
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        };
        stream.set_nodelay(true).map_err(unavailable)?;
        let mut writer = BufWriter::new(stream.try_clone().map_err(unavailable)?);
        let hello = RingTensor::from_vec(vec![rank as u64, world_size as u64]);
        Frame::words(TAG_HELLO, hello)
            .write_to(&mut writer)
            .map_err(unavailable)?;
        Ok(RemoteDealer {
            reader: BufReader::new(stream),
            writer,
        })
    }

    fn read(&mut self) -> Result<Frame> {
        Frame::read_from(&mut self.reader)
            .map_err(unavailable)?
            .ok_or_else(|| unavailable("dealer closed the connection"))
    }
}

impl CorrelationSource for RemoteDealer {
    fn fetch(&mut self, step: u64, request: &Request) -> Result<Vec<RingTensor>> {
        let mut words = vec![step];
        words.extend(request.to_words());
        Frame::words(TAG_REQUEST, RingTensor::from_vec(words))
            .write_to(&mut self.writer)
            .map_err(unavailable)?;
        let head = self.read()?;
        match (head.tag, head.payload) {
            (TAG_COUNT, Payload::Words(t)) if t.len() == 1 => {
                let n = t.data()[0] as usize;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let f = self.read()?;
                    if f.tag != TAG_SHARE {
                        return Err(unavailable("unexpected frame from dealer"));
                    }
                    out.push(f.into_tensor()?);
                }
                Ok(out)
            }
            (TAG_ERROR, Payload::Bytes(b)) if !b.is_empty() => {
                let msg = String::from_utf8_lossy(&b[1..]).into_owned();
                Err(match b[0] {
                    ERR_DESYNC => Error::Desync(msg),
                    ERR_SHAPE => Error::ShapeMismatch(msg),
                    _ => Error::DealerUnavailable(msg),
                })
            }
            _ => Err(unavailable("malformed dealer response")),
        }
    }
}

/// Serves correlated randomness to `world_size` parties over TCP. Returns
/// once every party has connected and later disconnected.
pub fn serve_dealer(listener: TcpListener, world_size: usize, master_seed: u64) -> Result<()> {
    let core = Arc::new(DealerCore::new(world_size, master_seed));
    let mut handles = Vec::with_capacity(world_size);
    let mut seen = vec![false; world_size];
    while handles.len() < world_size {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let hello = Frame::read_from(&mut reader)?
            .ok_or_else(|| Error::Frame("party closed before hello".into()))?;
        let words = match (hello.tag, hello.payload) {
            (TAG_HELLO, Payload::Words(t)) if t.len() == 2 => t.into_data(),
            _ => return Err(Error::Frame("bad dealer hello".into())),
        };
        let (rank, their_world) = (words[0] as usize, words[1] as usize);
        if their_world != world_size || rank >= world_size || seen[rank] {
            return Err(Error::Config(format!(
                "dealer for {world_size} parties got hello from rank {rank} of {their_world}"
            )));
        }
        seen[rank] = true;
        let core = core.clone();
        let writer = BufWriter::new(stream);
        handles.push(thread::spawn(move || serve_party(&core, rank, reader, writer)));
    }
    let mut first_err = None;
    for h in handles {
        if let Err(e) = h.join().expect("dealer worker panicked") {
            first_err.get_or_insert(e);
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn serve_party(
    core: &DealerCore,
    rank: usize,
    mut reader: BufReader<TcpStream>,
    mut writer: BufWriter<TcpStream>,
) -> Result<()> {
    while let Some(frame) = Frame::read_from(&mut reader)? {
        let words = match (frame.tag, frame.payload) {
            (TAG_REQUEST, Payload::Words(t)) if !t.is_empty() => t.into_data(),
            _ => return Err(Error::Frame("bad dealer request frame".into())),
        };
        let result = Request::from_words(&words[1..])
            .and_then(|req| core.fetch(rank, words[0], &req));
        match result {
            Ok(shares) => {
                let count = RingTensor::from_vec(vec![shares.len() as u64]);
                let mut buf = Frame::words(TAG_COUNT, count).encode();
                for s in shares {
                    buf.extend(Frame::words(TAG_SHARE, s).encode());
                }
                writer.write_all(&buf)?;
                writer.flush()?;
            }
            Err(e) => {
                let code = match e {
                    Error::Desync(_) => ERR_DESYNC,
                    Error::ShapeMismatch(_) => ERR_SHAPE,
                    _ => ERR_OTHER,
                };
                let msg = match &e {
                    Error::Desync(m) | Error::ShapeMismatch(m) => m.clone(),
                    other => other.to_string(),
                };
                let mut bytes = vec![code];
                bytes.extend(msg.into_bytes());
                Frame::bytes(TAG_ERROR, bytes).write_to(&mut writer)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_matches_in_process_dealing() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || serve_dealer(listener, 2, 77));
        let req = Request::BinaryTriple { dims: vec![3] };
        let want = DealerCore::new(2, 77).deal(1, &req).unwrap();
        let clients: Vec<_> = (0..2)
            .map(|rank| {
                let req = req.clone();
                thread::spawn(move || {
                    let mut d = RemoteDealer::connect(addr, rank, 2, Duration::from_secs(5)).unwrap();
                    let got = d.fetch(1, &req).unwrap();
                    let bad = d.fetch(2, &Request::Square { dims: vec![usize::MAX, 2] });
                    (got, bad.is_err())
                })
            })
            .collect();
        for (rank, c) in clients.into_iter().enumerate() {
            let (got, bad) = c.join().unwrap();
            assert_eq!(got, want[rank]);
            assert!(bad);
        }
        server.join().unwrap().unwrap();
    }
}
