//! Wall-clock comparison of the two GE kernels.
//!
//! Each trial records the cumulative elapsed time at every checkpoint of a
//! single curve computation; the report keeps the per-checkpoint median.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::ge::{naive_observed, optimized_observed, GeConfig};
use crate::sca::AttackSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeImpl {
    Optimized,
    Naive,
}

impl fmt::Display for GeImpl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeImpl::Optimized => "optimized",
            GeImpl::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub implementation: GeImpl,
    pub n_traces: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn rows_for(&self, implementation: GeImpl) -> impl Iterator<Item = &BenchRow> {
        self.rows
            .iter()
            .filter(move |r| r.implementation == implementation)
    }

    /// Median time to finish the whole curve.
    pub fn total_seconds(&self, implementation: GeImpl) -> Option<f64> {
        self.rows_for(implementation).last().map(|r| r.seconds)
    }

    /// Writes `impl,n_traces,seconds` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["impl", "n_traces", "seconds"])?;
        for row in &self.rows {
            w.write_record([
                row.implementation.to_string(),
                row.n_traces.to_string(),
                format!("{:.9}", row.seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    }
}

fn time_trial(attack: &AttackSet, cfg: &GeConfig, implementation: GeImpl) -> Result<Vec<f64>> {
    let mut marks = Vec::with_capacity(cfg.checkpoints().len());
    let start = Instant::now();
    let record = |_: usize| marks.push(start.elapsed().as_secs_f64());
    match implementation {
        GeImpl::Optimized => optimized_observed(attack, cfg, record)?,
        GeImpl::Naive => naive_observed(attack, cfg, record)?,
    };
    Ok(marks)
}

pub fn bench_ge(attack: &AttackSet, cfg: &GeConfig, trials: usize) -> Result<BenchReport> {
    bench_impls(attack, cfg, trials, &[GeImpl::Optimized, GeImpl::Naive])
}

/// Benchmarks a chosen subset of kernels.
pub fn bench_impls(
    attack: &AttackSet,
    cfg: &GeConfig,
    trials: usize,
    impls: &[GeImpl],
) -> Result<BenchReport> {
    if trials == 0 {
        return Err(Error::Structural("trials must be at least 1".into()));
    }
    cfg.validate_for(attack)?;
    let checkpoints = cfg.checkpoints();
    let mut report = BenchReport::default();
    for &implementation in impls {
        let runs = (0..trials)
            .map(|_| time_trial(attack, cfg, implementation))
            .collect::<Result<Vec<_>>>()?;
        for (idx, &n_traces) in checkpoints.iter().enumerate() {
            let mut samples: Vec<f64> = runs.iter().map(|r| r[idx]).collect();
            report.rows.push(BenchRow {
                implementation,
                n_traces,
                seconds: median(&mut samples),
            });
        }
    }
    Ok(report)
}
