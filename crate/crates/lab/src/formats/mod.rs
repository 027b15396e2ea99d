//! Versioned on-disk formats.
//!
//! Floating-point parameters are stored as decimal strings holding the
//! shortest representation that parses back to the same bits.

mod checkpoint;
mod network;
mod trajectory;

use std::path::Path;

pub use checkpoint::{Checkpoint, CheckpointDoc, Role, NormalizerDoc};
pub use network::{NetworkDoc, RecurrentDoc};
pub use trajectory::{read_trajectories, write_trajectories, TrajectoryFile, TrajectoryHeader, TrajectoryRecord};

use crate::error::{io_err, LabError, Result};

pub(crate) fn encode(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn decode(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| LabError::Format(format!("`{s}` is not a decimal number")))
}

pub(crate) fn encode_all(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(encode).collect()
}

pub(crate) fn decode_all(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| decode(s)).collect()
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| crate::error::parse_err(path, e))
}
