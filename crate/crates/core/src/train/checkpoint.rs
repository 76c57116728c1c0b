//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TRBCKPT\0"
//! version   u32
//! meta_len  u64      length of the JSON metadata block
//! meta      JSON     {config, normalizer, specs}
//! count     u64      number of parameter values
//! values    count x f64 (IEEE-754, little-endian)
//! crc32     u32      over every preceding byte
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::Normalizer;
use crate::nn::{ParamSpec, ParamStore};
use crate::predict::{ModelConfig, RecurrentModel};

const MAGIC: &[u8; 8] = b"TRBCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    normalizer: Normalizer,
    specs: Vec<ParamSpec>,
}

pub fn write_checkpoint<W: Write>(model: &RecurrentModel, mut w: W) -> Result<()> {
    let meta = Meta {
        config: model.config().clone(),
        normalizer: model.normalizer().clone(),
        specs: model.params().specs().to_vec(),
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| Error::Corrupt(e.to_string()))?;
    let data = model.params().data();
    let mut buf = Vec::with_capacity(32 + meta.len() + 8 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt("checkpoint is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<RecurrentModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < MAGIC.len() + 4 || &buf[..8] != MAGIC {
        return Err(Error::Corrupt("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if buf.len() < 16 {
        return Err(Error::Corrupt("checkpoint is truncated".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupt("checksum mismatch (truncated or damaged file)".into()));
    }
    let mut c = Cursor { buf: body, pos: 12 };
    let meta_len = c.u64()? as usize;
    let meta: Meta = serde_json::from_slice(c.take(meta_len)?).map_err(|e| Error::Corrupt(format!("metadata: {e}")))?;
    let count = c.u64()? as usize;
    let raw = c.take(count.checked_mul(8).ok_or_else(|| Error::Corrupt("bad value count".into()))?)?;
    if c.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes after parameters".into()));
    }
    let data = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let params = ParamStore::from_parts(meta.specs, data).ok_or_else(|| Error::Corrupt("parameter specs do not cover the data".into()))?;
    RecurrentModel::from_parts(meta.config, meta.normalizer, params)
}

pub fn save_checkpoint(model: &RecurrentModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<RecurrentModel> {
    read_checkpoint(fs::File::open(path)?)
}
