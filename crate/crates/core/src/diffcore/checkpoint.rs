//! Parameter checkpoints.
//!
//! Binary layout:
//!
//! ```text
//! b"SNMPPCKP"                 8-byte magic
//! u64 little-endian           header length in bytes
//! JSON header                 {"format-version", "n-params", "slices", "meta"}
//! n-params × f64 little-endian raw parameter values
//! ```

use super::params::{ParamLayout, ParamStore};
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"SNMPPCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("header declares {declared} parameters but the layout covers {layout}")]
    Length { declared: usize, layout: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub n_params: usize,
    pub layout: ParamLayout,
    /// Free-form description of the model that owns the parameters.
    pub meta: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(mut w: W, store: &ParamStore, meta: serde_json::Value) -> Result<(), CheckpointError> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        n_params: store.len(),
        layout: store.layout().clone(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in store.raw() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, ParamStore), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    if header.n_params != header.layout.total() {
        return Err(CheckpointError::Length {
            declared: header.n_params,
            layout: header.layout.total(),
        });
    }
    let mut raw = Vec::with_capacity(header.n_params);
    let mut buf = [0u8; 8];
    for _ in 0..header.n_params {
        r.read_exact(&mut buf)?;
        raw.push(f64::from_le_bytes(buf));
    }
    let store = ParamStore::from_raw(header.layout.clone(), raw).expect("length checked above");
    Ok((header, store))
}
