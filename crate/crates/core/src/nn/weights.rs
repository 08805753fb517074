//! Binary weight file.
//!
//! ```text
//! "MPCW" | u32 version | u32 precision bits | layout | weights
//! layout:  the module tree in prefix order, each node a u8 kind and its
//!          u32 fields (shapes, stride, padding, bias flag as u8); a
//!          sequential node carries its child count
//! weights: every parameter in order, i64 fixed point
//! ```
//! All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ring::{Conv2dParams, FixedPointEncoder, RingElement};

use super::{Module, Param};

const MAGIC: &[u8; 4] = b"MPCW";
const VERSION: u32 = 1;

const LINEAR: u8 = 1;
const CONV2D: u8 = 2;
const RELU: u8 = 3;
const SIGMOID: u8 = 4;
const SOFTMAX: u8 = 5;
const MAXPOOL2D: u8 = 6;
const FLATTEN: u8 = 7;
const SEQUENTIAL: u8 = 8;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit the weight file")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn write_layout(m: &Module, out: &mut Vec<u8>) -> Result<()> {
    match m {
        Module::Linear { weight, bias } => {
            out.push(LINEAR);
            put_u32(out, weight.dims()[0])?;
            put_u32(out, weight.dims()[1])?;
            out.push(bias.is_some() as u8);
        }
        Module::Conv2d {
            weight,
            bias,
            params,
        } => {
            out.push(CONV2D);
            for &d in weight.dims() {
                put_u32(out, d)?;
            }
            put_u32(out, params.stride)?;
            put_u32(out, params.padding)?;
            out.push(bias.is_some() as u8);
        }
        Module::ReLU => out.push(RELU),
        Module::Sigmoid => out.push(SIGMOID),
        Module::Softmax => out.push(SOFTMAX),
        Module::MaxPool2d { kernel, stride } => {
            out.push(MAXPOOL2D);
            put_u32(out, *kernel)?;
            put_u32(out, *stride)?;
        }
        Module::Flatten => out.push(FLATTEN),
        Module::Sequential(children) => {
            out.push(SEQUENTIAL);
            put_u32(out, children.len())?;
            for c in children {
                write_layout(c, out)?;
            }
        }
    }
    Ok(())
}

/// Serializes a plaintext model.
pub fn write_weights(model: &Module, encoder: FixedPointEncoder, w: &mut impl Write) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&encoder.precision_bits().to_le_bytes());
    write_layout(model, &mut out)?;
    for (_, p) in model.parameters() {
        for &v in p.plain_values()? {
            out.extend_from_slice(&encoder.encode(v)?.signed().to_le_bytes());
        }
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn save_weights(model: &Module, encoder: FixedPointEncoder, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(model, encoder, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Frame("weight file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn i64(&mut self) -> Result<i64> {
        let b = self.take(8)?;
        Ok(i64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

fn placeholder(dims: &[usize]) -> Param {
    Param::Plain {
        dims: dims.to_vec(),
        values: Vec::new(),
    }
}

fn read_layout(c: &mut Cursor, depth: usize) -> Result<Module> {
    if depth > 64 {
        return Err(Error::Frame("layer nesting too deep".into()));
    }
    let bias = |c: &mut Cursor| -> Result<bool> {
        match c.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Frame(format!("bad bias flag {b}"))),
        }
    };
    Ok(match c.u8()? {
        LINEAR => {
            let (i, o) = (c.u32()?, c.u32()?);
            Module::Linear {
                weight: placeholder(&[i, o]),
                bias: bias(c)?.then(|| placeholder(&[o])),
            }
        }
        CONV2D => {
            let dims = [c.u32()?, c.u32()?, c.u32()?, c.u32()?];
            let params = Conv2dParams {
                stride: c.u32()?,
                padding: c.u32()?,
            };
            Module::Conv2d {
                weight: placeholder(&dims),
                bias: bias(c)?.then(|| placeholder(&dims[..1])),
                params,
            }
        }
        RELU => Module::ReLU,
        SIGMOID => Module::Sigmoid,
        SOFTMAX => Module::Softmax,
        MAXPOOL2D => Module::MaxPool2d {
            kernel: c.u32()?,
            stride: c.u32()?,
        },
        FLATTEN => Module::Flatten,
        SEQUENTIAL => {
            let n = c.u32()?;
            let mut children = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                children.push(read_layout(c, depth + 1)?);
            }
            Module::Sequential(children)
        }
        k => return Err(Error::Frame(format!("unknown layer kind {k}"))),
    })
}

/// Parses a weight file into a plaintext model and the encoder it was
/// written with.
pub fn read_weights(r: &mut impl Read) -> Result<(Module, FixedPointEncoder)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Frame("not a weight file".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Frame(format!("unsupported weight file version {version}")));
    }
    let bits = c.u32()? as u32;
    if bits > 62 {
        return Err(Error::Frame(format!("precision of {bits} bits")));
    }
    let encoder = FixedPointEncoder::new(bits);
    let mut model = read_layout(&mut c, 0)?;
    for (_, p) in model.parameters_mut() {
        let Param::Plain { dims, values } = p else { unreachable!("freshly parsed") };
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= (c.buf.len() - c.pos) / 8)
            .ok_or_else(|| Error::Frame("weight file is truncated".into()))?;
        values.reserve(n);
        for _ in 0..n {
            values.push(encoder.decode(RingElement::from_signed(c.i64()?)));
        }
    }
    if c.pos != buf.len() {
        return Err(Error::Frame("trailing bytes after weights".into()));
    }
    Ok((model, encoder))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(Module, FixedPointEncoder)> {
    read_weights(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    #[test]
    fn roundtrip_preserves_layout_and_encoded_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let model = Module::Sequential(vec![
            Module::conv2d(1, 2, 3, Conv2dParams { stride: 1, padding: 1 }, &mut rng),
            Module::ReLU,
            Module::MaxPool2d { kernel: 2, stride: 2 },
            Module::Flatten,
            Module::linear(8, 3, &mut rng),
            Module::Softmax,
        ]);
        let enc = FixedPointEncoder::new(16);
        let mut buf = Vec::new();
        write_weights(&model, enc, &mut buf).unwrap();
        let (back, enc2) = read_weights(&mut buf.as_slice()).unwrap();
        assert_eq!(enc2, enc);
        let a = model.parameters();
        let b = back.parameters();
        assert_eq!(a.len(), b.len());
        for ((na, pa), (nb, pb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(pa.dims(), pb.dims());
            for (x, y) in pa.plain_values().unwrap().iter().zip(pb.plain_values().unwrap()) {
                assert_eq!(enc.decode(enc.encode(*x).unwrap()), *y);
            }
        }
        let mut again = Vec::new();
        write_weights(&back, enc, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let model = Module::Linear {
            weight: Param::plain(&[2, 1], vec![0.5, -0.25]).unwrap(),
            bias: None,
        };
        let enc = FixedPointEncoder::new(16);
        let mut buf = Vec::new();
        write_weights(&model, enc, &mut buf).unwrap();
        assert!(read_weights(&mut &buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_weights(&mut extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_weights(&mut bad.as_slice()).is_err());
    }
}
