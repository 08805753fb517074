//! Wire format shared by every transport and by the remote dealer.
//!
//! ```text
//! u64 payload byte length | u32 tag | u32 dtype | u32 ndims | ndims x u64 dims | payload
//! ```
//!
//! All integers are little-endian. Ring payloads are 64-bit words; byte
//! payloads carry a single dimension equal to their length.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ring::RingTensor;

const DTYPE_WORDS: u32 = 0;
const DTYPE_BYTES: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4;
/// Refuse frames that claim absurd sizes instead of allocating them.
const MAX_PAYLOAD: u64 = 1 << 34;
const MAX_DIMS: u32 = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Words(RingTensor),
    Bytes(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub tag: u32,
    pub payload: Payload,
}

impl Frame {
    pub fn words(tag: u32, tensor: RingTensor) -> Self {
        Frame {
            tag,
            payload: Payload::Words(tensor),
        }
    }

    pub fn bytes(tag: u32, bytes: Vec<u8>) -> Self {
        Frame {
            tag,
            payload: Payload::Bytes(bytes),
        }
    }

    fn ndims(&self) -> usize {
        match &self.payload {
            Payload::Words(t) => t.dims().len(),
            Payload::Bytes(_) => 1,
        }
    }

    fn payload_len(&self) -> usize {
        match &self.payload {
            Payload::Words(t) => t.len() * 8,
            Payload::Bytes(b) => b.len(),
        }
    }

    /// Size of the encoded frame in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 8 * self.ndims() + self.payload_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.payload_len() as u64).to_le_bytes());
        out.extend_from_slice(&self.tag.to_le_bytes());
        match &self.payload {
            Payload::Words(t) => {
                out.extend_from_slice(&DTYPE_WORDS.to_le_bytes());
                out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
                for &d in t.dims() {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for &w in t.data() {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
            Payload::Bytes(b) => {
                out.extend_from_slice(&DTYPE_BYTES.to_le_bytes());
                out.extend_from_slice(&1u32.to_le_bytes());
                out.extend_from_slice(&(b.len() as u64).to_le_bytes());
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<usize> {
        let buf = self.encode();
        w.write_all(&buf)?;
        w.flush()?;
        Ok(buf.len())
    }

    /// Reads one frame. Returns `Ok(None)` on a clean end of stream before
    /// the first header byte.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Frame>> {
        let mut header = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            match r.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::Frame("truncated header".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let len = u64::from_le_bytes(header[0..8].try_into().unwrap());
        let tag = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let dtype = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let ndims = u32::from_le_bytes(header[16..20].try_into().unwrap());
        if len > MAX_PAYLOAD || ndims > MAX_DIMS {
            return Err(Error::Frame(format!(
                "refusing frame with {len} payload bytes and {ndims} dims"
            )));
        }
        let mut dims_buf = vec![0u8; 8 * ndims as usize];
        r.read_exact(&mut dims_buf)?;
        let dims: Vec<usize> = dims_buf
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        let payload = match dtype {
            DTYPE_WORDS => {
                if len % 8 != 0 {
                    return Err(Error::Frame("word payload not a multiple of 8".into()));
                }
                let words = payload
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Payload::Words(
                    RingTensor::new(dims, words).map_err(|e| Error::Frame(e.to_string()))?,
                )
            }
            DTYPE_BYTES => {
                if dims != [len as usize] {
                    return Err(Error::Frame("byte payload length disagrees with dims".into()));
                }
                Payload::Bytes(payload)
            }
            other => return Err(Error::Frame(format!("unknown dtype {other}"))),
        };
        Ok(Some(Frame { tag, payload }))
    }

    pub fn into_tensor(self) -> Result<RingTensor> {
        match self.payload {
            Payload::Words(t) => Ok(t),
            Payload::Bytes(_) => Err(Error::Frame("expected ring words, got bytes".into())),
        }
    }
}
