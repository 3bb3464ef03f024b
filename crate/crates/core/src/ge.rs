//! Guessing-entropy curves, computed by the per-block kernel and by the
//! nested-loop reference it replaces.
//!
//! Both paths draw the same seeded trace orders and accumulate scores
//! sequentially in that order, so their outputs are bit-identical and the
//! naive path serves as an oracle for the fast one.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sca::{
    clamped_log, count_greater, AttackSet, GuessVector, KeyLogLikelihoodTable, DEFAULT_LOG_FLOOR,
};
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeConfig {
    /// Attack repetitions averaged per curve.
    pub n_attacks: usize,
    /// Traces consumed per repetition (`N_a`).
    pub max_traces: usize,
    /// Checkpoint spacing.
    pub step: usize,
    pub seed: u64,
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
}

fn default_log_floor() -> f64 {
    DEFAULT_LOG_FLOOR
}

impl GeConfig {
    pub fn new(n_attacks: usize, max_traces: usize, step: usize, seed: u64) -> Self {
        GeConfig {
            n_attacks,
            max_traces,
            step,
            seed,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }

    /// `step, 2*step, ...` up to `max_traces`, which always closes the list.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut points: Vec<usize> = (1..=self.max_traces / self.step.max(1))
            .map(|i| i * self.step)
            .collect();
        if points.last() != Some(&self.max_traces) {
            points.push(self.max_traces);
        }
        points
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_attacks == 0 {
            return Err(Error::Structural("n_attacks must be at least 1".into()));
        }
        if self.step == 0 {
            return Err(Error::Structural("step must be at least 1".into()));
        }
        if self.step > self.max_traces {
            return Err(Error::Structural(format!(
                "step {} exceeds max_traces {}",
                self.step, self.max_traces
            )));
        }
        if !(self.log_floor > 0.0) || !self.log_floor.is_finite() {
            return Err(Error::Domain(format!(
                "log floor must be positive and finite, got {}",
                self.log_floor
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, attack: &AttackSet) -> Result<()> {
        self.validate()?;
        if self.max_traces > attack.n_traces() {
            return Err(Error::Structural(format!(
                "max_traces {} exceeds the {} available attack traces",
                self.max_traces,
                attack.n_traces()
            )));
        }
        Ok(())
    }
}

/// Mean rank of the true key, sampled at trace-count checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeCurve {
    pub checkpoints: Vec<usize>,
    pub values: Vec<f64>,
    pub n_attacks: usize,
}

impl GeCurve {
    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.checkpoints
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    /// Writes `n_traces,ge` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_traces", "ge"])?;
        for (n, ge) in self.points() {
            w.write_record([n.to_string(), ge.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Trace order of one repetition: a full Fisher-Yates shuffle keyed by
/// `(seed, repetition)`, truncated to `take`.
pub fn attack_order(seed: u64, repetition: usize, n_traces: usize, take: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_traces).collect();
    order.shuffle(&mut derived_rng(seed, "ge-shuffle", repetition as u64));
    order.truncate(take);
    order
}

fn attack_orders(attack: &AttackSet, cfg: &GeConfig) -> Vec<Vec<usize>> {
    (0..cfg.n_attacks)
        .into_par_iter()
        .map(|r| attack_order(cfg.seed, r, attack.n_traces(), cfg.max_traces))
        .collect()
}

fn finish(checkpoints: Vec<usize>, rank_sums: Vec<u64>, n_attacks: usize) -> GeCurve {
    let values = rank_sums
        .into_iter()
        .map(|s| s as f64 / n_attacks as f64)
        .collect();
    GeCurve {
        checkpoints,
        values,
        n_attacks,
    }
}

/// GE through the reindexed log-likelihood table: one vector add per trace
/// and one counting pass per checkpoint.
pub fn ge_curve_optimized(attack: &AttackSet, cfg: &GeConfig) -> Result<GeCurve> {
    optimized_observed(attack, cfg, |_| {})
}

pub(crate) fn optimized_observed(
    attack: &AttackSet,
    cfg: &GeConfig,
    mut on_checkpoint: impl FnMut(usize),
) -> Result<GeCurve> {
    cfg.validate_for(attack)?;
    let table = KeyLogLikelihoodTable::build(attack, cfg.log_floor)?;
    let key = attack.true_key() as usize;
    let checkpoints = cfg.checkpoints();
    let orders = attack_orders(attack, cfg);
    let mut accumulators = vec![GuessVector::zeros(attack.keyspace()); cfg.n_attacks];
    let mut rank_sums = Vec::with_capacity(checkpoints.len());

    let mut consumed = 0;
    for (idx, &checkpoint) in checkpoints.iter().enumerate() {
        let window = consumed..checkpoint;
        let sum: u64 = accumulators
            .par_iter_mut()
            .zip(orders.par_iter())
            .map(|(acc, order)| {
                for &trace in &order[window.clone()] {
                    acc.accumulate(table.row(trace));
                }
                let scores = acc.scores();
                count_greater(scores, scores[key]) as u64
            })
            .sum();
        rank_sums.push(sum);
        consumed = checkpoint;
        on_checkpoint(idx);
    }
    Ok(finish(checkpoints, rank_sums, cfg.n_attacks))
}

/// Reference GE: per checkpoint, per repetition, per trace, per key, with
/// the XOR and S-box lookup done value by value and no shared table.
pub fn ge_curve_naive(attack: &AttackSet, cfg: &GeConfig) -> Result<GeCurve> {
    naive_observed(attack, cfg, |_| {})
}

pub(crate) fn naive_observed(
    attack: &AttackSet,
    cfg: &GeConfig,
    mut on_checkpoint: impl FnMut(usize),
) -> Result<GeCurve> {
    cfg.validate_for(attack)?;
    let keyspace = attack.keyspace();
    let width = keyspace.size();
    let key = attack.true_key() as usize;
    let checkpoints = cfg.checkpoints();
    let orders = attack_orders(attack, cfg);
    let mut rank_sums = Vec::with_capacity(checkpoints.len());
    let mut scores = vec![0.0f64; width];

    for (idx, &checkpoint) in checkpoints.iter().enumerate() {
        let mut sum = 0u64;
        for order in &orders {
            scores.iter_mut().for_each(|s| *s = 0.0);
            for &trace in &order[..checkpoint] {
                let row = attack.row(trace);
                let plaintext = attack.plaintexts()[trace];
                for (k, score) in scores.iter_mut().enumerate() {
                    let label = keyspace.label(plaintext, k as u8);
                    *score += clamped_log(row[label], cfg.log_floor);
                }
            }
            let mut rank = 0u64;
            for k in 0..width {
                if scores[k] > scores[key] {
                    rank += 1;
                }
            }
            sum += rank;
        }
        rank_sums.push(sum);
        on_checkpoint(idx);
    }
    Ok(finish(checkpoints, rank_sums, cfg.n_attacks))
}
