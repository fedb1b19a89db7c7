//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "GRNNCKPT"
//! version      u32      1
//! unit         u8       0 = nrnu, 1 = lstm
//! pooling      u8       0 = sum, 1 = mean, 2 = max
//! hidden       u32
//! depth        u32
//! classes      u32
//! features     u32
//! tensors      u32      count
//! per tensor:
//!   name_len   u16, name bytes (UTF-8)
//!   rows       u32
//!   cols       u32
//!   data       rows * cols f64
//! checksum     u64      FNV-1a over every preceding byte
//! ```
//!
//! Input-weight tensors (`unit.*.W`) are stored feature-major, `F × H`.
//! Values are always written as `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GrnnModel, ModelConfig, UnitKind};
use crate::numerics::Scalar;
use crate::params::ParamSet;
use crate::units::Pooling;

const MAGIC: &[u8; 8] = b"GRNNCKPT";
const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode<T: Scalar>(m: &GrnnModel<T>) -> Vec<u8> {
    let c = &m.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match c.unit {
        UnitKind::Nrnu => 0,
        UnitKind::Lstm => 1,
    });
    buf.push(match c.pooling {
        Pooling::Sum => 0,
        Pooling::Mean => 1,
        Pooling::Max => 2,
    });
    for v in [c.hidden, c.depth, c.class_count, c.feature_dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = m.params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in t.data {
            buf.extend_from_slice(&v.to_f64().expect("finite parameter").to_le_bytes());
        }
    }
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<GrnnModel<T>> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if &body[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    if fnv1a(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let unit = match r.u8()? {
        0 => UnitKind::Nrnu,
        1 => UnitKind::Lstm,
        other => return Err(Error::Checkpoint(format!("unknown unit tag {other}"))),
    };
    let pooling = match r.u8()? {
        0 => Pooling::Sum,
        1 => Pooling::Mean,
        2 => Pooling::Max,
        other => return Err(Error::Checkpoint(format!("unknown pooling tag {other}"))),
    };
    let config = ModelConfig {
        unit,
        pooling,
        hidden: r.u32()? as usize,
        depth: r.u32()? as usize,
        class_count: r.u32()? as usize,
        feature_dim: r.u32()? as usize,
    };
    if config.hidden == 0 || config.class_count == 0 || config.feature_dim == 0 {
        return Err(Error::Checkpoint("zero dimension in header".into()));
    }
    let mut model = GrnnModel::<T>::zeros(config);
    let count = r.u32()? as usize;
    let mut tensors = model.params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if name != t.name {
            return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{name}`", t.name)));
        }
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if (rows, cols) != (t.rows, t.cols) {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {rows}x{cols}, header implies {}x{}",
                t.rows, t.cols
            )));
        }
        for v in t.data.iter_mut() {
            *v = T::from_f64(r.f64()?).ok_or_else(|| Error::Checkpoint("value out of range".into()))?;
        }
    }
    drop(tensors);
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(m: &GrnnModel<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(m)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<GrnnModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint and rejects it unless it was trained on
/// `feature_dim` features.
pub fn load_checkpoint_for<T: Scalar>(path: &Path, feature_dim: usize, class_count: usize) -> Result<GrnnModel<T>> {
    let m = load_checkpoint::<T>(path)?;
    if m.config.feature_dim != feature_dim {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {} features, dataset has {feature_dim}",
            m.config.feature_dim
        )));
    }
    if m.config.class_count != class_count {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {} classes, dataset has {class_count}",
            m.config.class_count
        )));
    }
    Ok(m)
}
