//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//! magic `CALB`, format version u32, config JSON (u64 byte length + bytes),
//! then every parameter in registration order as
//! (name length u32, name bytes, rank u32, extents u64 each, raw f32 data).

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{register_params, EncoderModel, InitKind, ModelConfig, ModelError};

const MAGIC: &[u8; 4] = b"CALB";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config in checkpoint: {0}")]
    Config(#[from] ModelError),
    #[error("checkpoint truncated")]
    UnexpectedEof,
    #[error("parameter mismatch: expected {expected:?}, found {found:?}")]
    ParamMismatch { expected: String, found: String },
    #[error("shape mismatch for {name:?}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("trailing bytes after last parameter")]
    TrailingBytes,
}

pub fn save(model: &EncoderModel, path: &Path) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg_json = serde_json::to_vec(&model.cfg)?;
    w.write_all(&(cfg_json.len() as u64).to_le_bytes())?;
    w.write_all(&cfg_json)?;
    for id in model.store.ids() {
        let name = model.store.name(id).as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = model.store.shape(id);
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &e in shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in model.store.get(id) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::UnexpectedEof);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<EncoderModel, CheckpointError> {
    let bytes = std::fs::read(path)?;
    let mut c = Cursor {
        buf: &bytes,
        pos: 0,
    };
    if c.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let cfg_len = c.u64()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(c.take(cfg_len)?)?;
    cfg.validate()?;

    // Records appear in registration order, so replay registration and pull
    // each record as its parameter comes up.
    let mut failure: Option<CheckpointError> = None;
    let (store, layout) = register_params(&cfg, |name, shape, _kind: InitKind| {
        let n: usize = shape.iter().product();
        if failure.is_some() {
            return vec![0.0; n];
        }
        match read_record(&mut c, name, shape) {
            Ok(data) => data,
            Err(e) => {
                failure = Some(e);
                vec![0.0; n]
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if c.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes);
    }
    Ok(EncoderModel { cfg, store, layout })
}

fn read_record(
    c: &mut Cursor<'_>,
    expected_name: &str,
    expected_shape: &[usize],
) -> Result<Vec<f32>, CheckpointError> {
    let name_len = c.u32()? as usize;
    let name = std::str::from_utf8(c.take(name_len)?)
        .map_err(|_| CheckpointError::BadMagic)?
        .to_string();
    if name != expected_name {
        return Err(CheckpointError::ParamMismatch {
            expected: expected_name.to_string(),
            found: name,
        });
    }
    let rank = c.u32()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(c.u64()? as usize);
    }
    if shape != expected_shape {
        return Err(CheckpointError::ShapeMismatch {
            name,
            expected: expected_shape.to_vec(),
            found: shape,
        });
    }
    let n: usize = shape.iter().product();
    let raw = c.take(n * 4)?;
    Ok(raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}
