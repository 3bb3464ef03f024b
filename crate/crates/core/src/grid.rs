//! Grid search that ends as soon as one point meets the stop conditions.

use std::fmt;
use std::fs::{self, File};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::early_stop::{monitor_training, AreaOfHit, MonitorReport, PersistenceConfig};
use crate::error::{Error, Result};
use crate::ge::GeConfig;
use crate::sca::AttackSet;
use crate::seed::derive_seed;
use crate::sim::{LeakageSchedule, ScheduleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            ParamValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub axes: Vec<Axis>,
}

impl HyperSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let space = HyperSpace { axes };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Structural("hyperparameter space has no axes".into()));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(Error::Structural(format!(
                    "axis {:?} has no values",
                    axis.name
                )));
            }
            if self.axes[..i].iter().any(|a| a.name == axis.name) {
                return Err(Error::Structural(format!(
                    "axis {:?} listed twice",
                    axis.name
                )));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let space: HyperSpace = serde_json::from_slice(&raw).map_err(|e| Error::json(path, e))?;
        space.validate()?;
        Ok(space)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Position in enumeration order, from 0.
    pub index: usize,
    pub params: Vec<(String, ParamValue)>,
}

impl GridPoint {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// `name=value` pairs joined by `;`.
    pub fn describe(&self) -> String {
        self.params
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Lexicographic product of the axes: the last axis varies fastest.
pub fn enumerate_grid(space: &HyperSpace) -> Vec<GridPoint> {
    let total = space.size();
    (0..total)
        .map(|index| {
            let mut rem = index;
            let mut params: Vec<(String, ParamValue)> = space
                .axes
                .iter()
                .rev()
                .map(|axis| {
                    let value = axis.values[rem % axis.values.len()].clone();
                    rem /= axis.values.len();
                    (axis.name.clone(), value)
                })
                .collect();
            params.reverse();
            GridPoint { index, params }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    FoundWinner,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub point: GridPoint,
    /// The trainer's or monitor's failure message when the point errored.
    pub report: Result<MonitorReport, String>,
}

impl PointResult {
    pub fn stopped_at(&self) -> Option<usize> {
        self.report.as_ref().ok().and_then(|r| r.stopped_at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub evaluated: Vec<PointResult>,
    /// Grid index of the first point whose training stopped.
    pub winner: Option<usize>,
    pub stop_reason: StopReason,
}

impl SearchOutcome {
    pub fn winner_result(&self) -> Option<&PointResult> {
        let index = self.winner?;
        self.evaluated.iter().find(|r| r.point.index == index)
    }

    /// Writes `dir/search.csv` and one `dir/point_<index>/` run directory per
    /// evaluated point.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("search.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["point_index", "params", "stopped_at", "hit_epochs"])?;
        for result in &self.evaluated {
            let point_dir = dir.join(format!("point_{}", result.point.index));
            let hits = match &result.report {
                Ok(report) => {
                    report.write_run_dir(&point_dir)?;
                    report
                        .hit_epochs()
                        .iter()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join(";")
                }
                Err(message) => {
                    fs::create_dir_all(&point_dir).map_err(|e| Error::io(&point_dir, e))?;
                    let err_path = point_dir.join("error.txt");
                    fs::write(&err_path, message).map_err(|e| Error::io(&err_path, e))?;
                    String::new()
                }
            };
            w.write_record([
                result.point.index.to_string(),
                result.point.describe(),
                result
                    .stopped_at()
                    .map(|s| s.to_string())
                    .unwrap_or_default(),
                hits,
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Simulated-training schedule for a grid point. Axes named after schedule
/// parameters (`preset`, `theta_max`, `n_epochs`, ...) override `base`; any
/// other axis is a label. Each point gets its own seed derived from `seed`.
pub fn point_schedule(
    point: &GridPoint,
    base: &ScheduleParams,
    seed: u64,
) -> Result<LeakageSchedule> {
    let mut params = base.clone();
    for (name, value) in &point.params {
        params.set(name, &value.to_string())?;
    }
    params.build(derive_seed(seed, "grid-point", point.index as u64))
}

/// Trains grid points in enumeration order under the early-stopping monitor
/// and returns at the first point whose training stops. A failing point is
/// recorded and the search moves on.
pub fn search<F, I>(
    space: &HyperSpace,
    mut trainer: F,
    ge_cfg: &GeConfig,
    area: &AreaOfHit,
    persistence: &PersistenceConfig,
    patience: usize,
) -> Result<SearchOutcome>
where
    F: FnMut(&GridPoint) -> Result<I>,
    I: IntoIterator<Item = Result<AttackSet>>,
{
    space.validate()?;
    ge_cfg.validate()?;
    area.validate()?;
    persistence.validate()?;
    let mut evaluated = Vec::new();
    for point in enumerate_grid(space) {
        let report = trainer(&point)
            .and_then(|epochs| monitor_training(epochs, ge_cfg, area, persistence, patience))
            .map_err(|e| e.to_string());
        let stopped = report.as_ref().is_ok_and(|r| r.stopped_at.is_some());
        let index = point.index;
        evaluated.push(PointResult { point, report });
        if stopped {
            return Ok(SearchOutcome {
                evaluated,
                winner: Some(index),
                stop_reason: StopReason::FoundWinner,
            });
        }
    }
    Ok(SearchOutcome {
        evaluated,
        winner: None,
        stop_reason: StopReason::Exhausted,
    })
}
