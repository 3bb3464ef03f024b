//! Domain types shared by every other module: the attack set, the AES
//! substitution box, the key-hypothesis reindexing and the rank primitive.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Probabilities are clamped to this value before taking logarithms.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-36;

/// Tolerance on the sum of each prediction row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[rustfmt::skip]
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// The AES forward substitution box.
#[inline]
pub fn aes_sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

/// Number of key hypotheses for one key byte.
///
/// A full keyspace of 256 labels traces through the AES S-box. Smaller
/// power-of-two keyspaces exist for brute-force testing and use the identity
/// permutation instead, which keeps `plaintext ^ key` closed in the space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Keyspace(usize);

impl Keyspace {
    pub const AES: Keyspace = Keyspace(256);

    pub fn new(size: usize) -> Result<Self> {
        if !(2..=256).contains(&size) || !size.is_power_of_two() {
            return Err(Error::Domain(format!(
                "keyspace must be a power of two in [2, 256], got {size}"
            )));
        }
        Ok(Keyspace(size))
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0
    }

    /// The label predicted for `plaintext` under key hypothesis `key`.
    #[inline]
    pub fn label(self, plaintext: u8, key: u8) -> usize {
        let x = plaintext ^ key;
        if self.0 == 256 {
            aes_sbox(x) as usize
        } else {
            x as usize
        }
    }
}

/// Attack traces abstracted to the model's prediction vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSet {
    predictions: Vec<f32>,
    plaintexts: Vec<u8>,
    true_key: u8,
    keyspace: Keyspace,
}

impl AttackSet {
    /// Builds an attack set from a row-major `N x |K|` prediction matrix.
    pub fn new(
        predictions: Vec<f32>,
        plaintexts: Vec<u8>,
        true_key: u8,
        keyspace: usize,
    ) -> Result<Self> {
        let keyspace = Keyspace::new(keyspace)?;
        let width = keyspace.size();
        if predictions.len() != plaintexts.len() * width {
            return Err(Error::Structural(format!(
                "{} prediction values do not form {} rows of {width}",
                predictions.len(),
                plaintexts.len()
            )));
        }
        if true_key as usize >= width {
            return Err(Error::Domain(format!(
                "true key {true_key} outside keyspace of size {width}"
            )));
        }
        if let Some(i) = plaintexts.iter().position(|&p| p as usize >= width) {
            return Err(Error::Domain(format!(
                "plaintext {} at trace {i} outside keyspace of size {width}",
                plaintexts[i]
            )));
        }
        for (i, row) in predictions.chunks_exact(width).enumerate() {
            if let Some(bad) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                return Err(Error::Domain(format!(
                    "trace {i}: prediction {bad} is not a finite non-negative probability"
                )));
            }
            let sum: f64 = row.iter().map(|&p| f64::from(p)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Domain(format!(
                    "trace {i}: predictions sum to {sum}, not 1"
                )));
            }
        }
        Ok(AttackSet {
            predictions,
            plaintexts,
            true_key,
            keyspace,
        })
    }

    pub fn n_traces(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn keyspace(&self) -> Keyspace {
        self.keyspace
    }

    pub fn true_key(&self) -> u8 {
        self.true_key
    }

    pub fn plaintexts(&self) -> &[u8] {
        &self.plaintexts
    }

    /// Row-major prediction matrix.
    pub fn predictions(&self) -> &[f32] {
        &self.predictions
    }

    pub fn row(&self, trace: usize) -> &[f32] {
        let width = self.keyspace.size();
        &self.predictions[trace * width..(trace + 1) * width]
    }

    /// The label the true key produces for `trace`.
    pub fn true_label(&self, trace: usize) -> usize {
        self.keyspace.label(self.plaintexts[trace], self.true_key)
    }
}

/// Log-likelihood of one prediction after floor clamping. Both GE paths go
/// through this function so their inputs are bit-identical.
#[inline]
pub fn clamped_log(p: f32, log_floor: f64) -> f64 {
    f64::from(p).max(log_floor).ln()
}

/// Per-trace log-probabilities reindexed by key hypothesis:
/// `row(i)[k] = ln(max(pred[i][label(p_i, k)], floor))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyLogLikelihoodTable {
    rows: Vec<f64>,
    n_traces: usize,
    keyspace: Keyspace,
}

impl KeyLogLikelihoodTable {
    pub fn build(attack: &AttackSet, log_floor: f64) -> Result<Self> {
        if !(log_floor > 0.0) || !log_floor.is_finite() {
            return Err(Error::Domain(format!(
                "log floor must be positive and finite, got {log_floor}"
            )));
        }
        let keyspace = attack.keyspace();
        let width = keyspace.size();
        let mut rows = vec![0.0f64; attack.n_traces() * width];
        rows.par_chunks_mut(width)
            .zip(attack.predictions().par_chunks(width))
            .zip(attack.plaintexts().par_iter())
            .for_each(|((out, preds), &plaintext)| {
                for (key, slot) in out.iter_mut().enumerate() {
                    *slot = clamped_log(preds[keyspace.label(plaintext, key as u8)], log_floor);
                }
            });
        Ok(KeyLogLikelihoodTable {
            rows,
            n_traces: attack.n_traces(),
            keyspace,
        })
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn keyspace(&self) -> Keyspace {
        self.keyspace
    }

    pub fn row(&self, trace: usize) -> &[f64] {
        let width = self.keyspace.size();
        &self.rows[trace * width..(trace + 1) * width]
    }
}

/// Accumulated log-likelihood per key hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessVector {
    scores: Vec<f64>,
}

impl GuessVector {
    pub fn zeros(keyspace: Keyspace) -> Self {
        GuessVector {
            scores: vec![0.0; keyspace.size()],
        }
    }

    pub fn from_scores(scores: Vec<f64>) -> Self {
        GuessVector { scores }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Adds one reindexed table row element-wise.
    #[inline]
    pub fn accumulate(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.scores.len());
        for (s, r) in self.scores.iter_mut().zip(row) {
            *s += *r;
        }
    }

    pub fn reset(&mut self) {
        self.scores.iter_mut().for_each(|s| *s = 0.0);
    }

    pub fn rank_of(&self, key: u8) -> Result<usize> {
        rank_of_key(&self.scores, key)
    }
}

/// Number of hypotheses scoring strictly higher than `key`; rank 0 is best
/// and ties never penalize the key.
pub fn rank_of_key(scores: &[f64], key: u8) -> Result<usize> {
    let target = *scores.get(key as usize).ok_or_else(|| {
        Error::Domain(format!(
            "key {key} outside keyspace of size {}",
            scores.len()
        ))
    })?;
    Ok(count_greater(scores, target))
}

#[inline]
pub(crate) fn count_greater(scores: &[f64], target: f64) -> usize {
    scores.iter().filter(|&&s| s > target).count()
}
