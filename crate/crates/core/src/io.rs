//! On-disk attack sets: a JSON header next to two raw binary files.
//!
//! ```text
//! <dir>/header.json       {"n_traces": N, "keyspace": L, "true_key": k}
//! <dir>/predictions.bin   N * L little-endian f32, row-major
//! <dir>/plaintexts.bin    N bytes
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sca::AttackSet;

pub const HEADER_FILE: &str = "header.json";
pub const PREDICTIONS_FILE: &str = "predictions.bin";
pub const PLAINTEXTS_FILE: &str = "plaintexts.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackHeader {
    pub n_traces: usize,
    pub keyspace: usize,
    pub true_key: u8,
}

pub fn read_attack_set(dir: &Path) -> Result<AttackSet> {
    read_attack_files(
        &dir.join(HEADER_FILE),
        &dir.join(PREDICTIONS_FILE),
        &dir.join(PLAINTEXTS_FILE),
    )
}

pub fn read_attack_files(
    header: &Path,
    predictions: &Path,
    plaintexts: &Path,
) -> Result<AttackSet> {
    let raw = fs::read(header).map_err(|e| Error::io(header, e))?;
    let head: AttackHeader = serde_json::from_slice(&raw).map_err(|e| Error::json(header, e))?;

    let bytes = fs::read(predictions).map_err(|e| Error::io(predictions, e))?;
    let expected = head.n_traces * head.keyspace * 4;
    if bytes.len() != expected {
        return Err(Error::Structural(format!(
            "{}: expected {expected} bytes for {} x {} f32 values, found {}",
            predictions.display(),
            head.n_traces,
            head.keyspace,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let pts = fs::read(plaintexts).map_err(|e| Error::io(plaintexts, e))?;
    if pts.len() != head.n_traces {
        return Err(Error::Structural(format!(
            "{}: expected {} plaintext bytes, found {}",
            plaintexts.display(),
            head.n_traces,
            pts.len()
        )));
    }
    AttackSet::new(values, pts, head.true_key, head.keyspace)
}

pub fn write_attack_set(dir: &Path, attack: &AttackSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let head = AttackHeader {
        n_traces: attack.n_traces(),
        keyspace: attack.keyspace().size(),
        true_key: attack.true_key(),
    };
    let header_path = dir.join(HEADER_FILE);
    let json = serde_json::to_vec(&head).map_err(|e| Error::json(&header_path, e))?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;

    let mut bytes = Vec::with_capacity(attack.predictions().len() * 4);
    for p in attack.predictions() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    let pred_path = dir.join(PREDICTIONS_FILE);
    fs::write(&pred_path, bytes).map_err(|e| Error::io(&pred_path, e))?;

    let pt_path = dir.join(PLAINTEXTS_FILE);
    fs::write(&pt_path, attack.plaintexts()).map_err(|e| Error::io(&pt_path, e))?;
    Ok(())
}
