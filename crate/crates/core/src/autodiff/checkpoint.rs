//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "HSRCKPT\0"
//! version      u32       1
//! spec_hash    32 bytes  SHA-256 of the network spec text
//! step         u64       optimizer steps taken
//! spec_len     u32       followed by spec_len bytes of UTF-8 spec text
//! n_params     u32
//! per parameter:
//!   name_len   u32       followed by the UTF-8 name
//!   kind       u8        0 = weight, 1 = bias
//!   ndim       u32       followed by ndim × u32 dims
//!   values     f32 × product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ParamKind, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HSRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained weights together with the network spec they belong to.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub spec_text: String,
    pub step: u64,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn spec_hash(&self) -> [u8; 32] {
        Sha256::digest(self.spec_text.as_bytes()).into()
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<checkpoint stream>", e)
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&ckpt.spec_hash());
    buf.extend_from_slice(&ckpt.step.to_le_bytes());
    buf.extend_from_slice(&(ckpt.spec_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(ckpt.spec_text.as_bytes());
    buf.extend_from_slice(&(ckpt.params.len() as u32).to_le_bytes());
    for p in ckpt.params.iter() {
        buf.extend_from_slice(&(p.name().len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name().as_bytes());
        buf.push(match p.kind() {
            ParamKind::Weight => 0,
            ParamKind::Bias => 1,
        });
        buf.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.value {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(field, "truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, field: &str) -> Result<String> {
        let n = self.u32(field)? as usize;
        String::from_utf8(self.take(n, field)?.to_vec()).map_err(|_| Error::format(field, "not valid UTF-8"))
    }
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format("magic", "not a checkpoint file"));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let hash: [u8; 32] = c.take(32, "spec_hash")?.try_into().expect("32 bytes");
    let step = c.u64("step")?;
    let spec_text = c.string("spec")?;
    let expected: [u8; 32] = Sha256::digest(spec_text.as_bytes()).into();
    if hash != expected {
        return Err(Error::format("spec_hash", "does not match the embedded spec"));
    }
    let n = c.u32("n_params")?;
    let mut params = ParamStore::new();
    for i in 0..n {
        let name = c.string(&format!("param[{i}].name"))?;
        let kind = match c.take(1, "kind")?[0] {
            0 => ParamKind::Weight,
            1 => ParamKind::Bias,
            k => return Err(Error::format(format!("{name}.kind"), format!("unknown kind {k}"))),
        };
        let ndim = c.u32(&format!("{name}.ndim"))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32(&format!("{name}.dims"))? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = c.take(len * 4, &format!("{name}.values"))?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.add(name, kind, &shape, values)?;
    }
    if c.pos != bytes.len() {
        return Err(Error::format("payload", "trailing bytes after last parameter"));
    }
    Ok(Checkpoint { spec_text, step, params })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, ckpt)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

/// Hex SHA-256 of a checkpoint file's bytes.
pub fn checkpoint_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params
            .add("stem.w", ParamKind::Weight, &[2, 1, 3, 3], (0..18).map(|i| i as f32 * 0.1 - 0.7).collect())
            .unwrap();
        params.add("stem.b", ParamKind::Bias, &[2], vec![f32::MIN_POSITIVE, -0.0]).unwrap();
        Checkpoint {
            spec_text: "in_channels = 1\n".into(),
            step: 42,
            params,
        }
    }

    #[test]
    fn byte_exact_round_trip() {
        let ckpt = sample();
        let mut first = Vec::new();
        write_checkpoint(&mut first, &ckpt).unwrap();
        let back = read_checkpoint(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_checkpoint(&mut second, &back).unwrap();
        assert_eq!(first, second);
        assert_eq!(back.step, 42);
        assert_eq!(back.params.get(back.params.id_of("stem.b").unwrap()).value[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_checkpoint(&mut bytes.as_slice()), Err(Error::Format { .. })));
    }

    #[test]
    fn tampered_spec_detected() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        let spec_start = 8 + 4 + 32 + 8 + 4;
        bytes[spec_start] ^= 0x01;
        match read_checkpoint(&mut bytes.as_slice()) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "spec_hash"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
