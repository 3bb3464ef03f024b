//! Persistence and patience: the per-epoch early-stopping decision.
//!
//! An epoch *hits* when its GE curve stays inside the area of hit
//! `[v, N_a] x [0, w]` (every checkpoint in full mode, a fraction of them in
//! binary mode). Training stops after `patience` consecutive hits.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ge::{ge_curve_optimized, GeConfig, GeCurve};
use crate::sca::AttackSet;
use crate::seed::derive_seed;

/// Slack on the binary-mode fraction comparison so that e.g. 19/20 meets 0.95.
const FRACTION_EPS: f64 = 1e-9;

/// The rectangle `[v, n_a] x [0, w]` in (traces, GE) space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaOfHit {
    pub w: f64,
    /// Fixed lower trace bound; absent when it is found per epoch.
    pub v: Option<usize>,
    pub n_a: usize,
}

impl AreaOfHit {
    pub fn soft(w: f64, n_a: usize) -> Result<Self> {
        let area = AreaOfHit { w, v: None, n_a };
        area.validate()?;
        Ok(area)
    }

    pub fn greedy(w: f64, v: usize, n_a: usize) -> Result<Self> {
        let area = AreaOfHit { w, v: Some(v), n_a };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(Error::Domain(format!(
                "w must be finite and >= 0, got {}",
                self.w
            )));
        }
        if self.n_a == 0 {
            return Err(Error::Domain("N_a must be positive".into()));
        }
        if let Some(v) = self.v {
            if v == 0 || v > self.n_a {
                return Err(Error::Domain(format!(
                    "v must satisfy 0 < v <= N_a ({}), got {v}",
                    self.n_a
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PersistenceMode {
    /// Every checkpoint in the window must be inside the area.
    Full,
    /// At least this fraction of the window's checkpoints must be inside.
    Binary(f64),
}

impl PersistenceMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PersistenceMode::Full => Ok(()),
            PersistenceMode::Binary(f) if f > 0.0 && f <= 1.0 => Ok(()),
            PersistenceMode::Binary(f) => Err(Error::Domain(format!(
                "binary persistence fraction must lie in (0, 1], got {f}"
            ))),
        }
    }

    fn persists(&self, window: &[f64], w: f64) -> bool {
        if window.is_empty() {
            return false;
        }
        let inside = window.iter().filter(|&&g| g <= w).count();
        self.accepts(inside, window.len())
    }

    fn accepts(&self, inside: usize, total: usize) -> bool {
        match *self {
            PersistenceMode::Full => inside == total,
            PersistenceMode::Binary(f) => inside as f64 >= f * total as f64 - FRACTION_EPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PersistenceCase {
    /// `v` is where the curve enters the area, recomputed every epoch.
    Soft,
    /// `v` is fixed in advance: the curve must already be inside by `v`.
    Greedy(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceConfig {
    pub mode: PersistenceMode,
    pub case: PersistenceCase,
}

impl PersistenceConfig {
    pub fn new(mode: PersistenceMode, case: PersistenceCase) -> Self {
        PersistenceConfig { mode, case }
    }

    /// The area to use with this configuration: `v` comes from the case.
    pub fn area(&self, w: f64, n_a: usize) -> Result<AreaOfHit> {
        match self.case {
            PersistenceCase::Soft => AreaOfHit::soft(w, n_a),
            PersistenceCase::Greedy(v) => AreaOfHit::greedy(w, v, n_a),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if let PersistenceCase::Greedy(0) = self.case {
            return Err(Error::Domain("greedy v must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of testing one curve against the area of hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit: bool,
    pub v: Option<usize>,
}

/// Number of leading checkpoints that fall at or below `n_a`.
fn bounded_len(curve: &GeCurve, n_a: usize) -> usize {
    curve.checkpoints.partition_point(|&c| c <= n_a)
}

fn soft_v(curve: &GeCurve, end: usize, w: f64, mode: PersistenceMode) -> Option<usize> {
    let values = &curve.values[..end];
    // inside[i] = checkpoints at or after i that are inside the area
    let mut inside = vec![0usize; end + 1];
    for i in (0..end).rev() {
        inside[i] = inside[i + 1] + usize::from(values[i] <= w);
    }
    (0..end)
        .find(|&i| values[i] <= w && mode.accepts(inside[i], end - i))
        .map(|i| curve.checkpoints[i])
}

/// The smallest checkpoint from which the curve persists inside `[0, w]`
/// through its last checkpoint, or `None` if it never does.
pub fn compute_v_soft(curve: &GeCurve, w: f64, mode: PersistenceMode) -> Option<usize> {
    soft_v(curve, curve.len(), w, mode)
}

pub fn persistence_hit(curve: &GeCurve, area: &AreaOfHit, cfg: &PersistenceConfig) -> Result<Hit> {
    area.validate()?;
    cfg.validate()?;
    let (first, last) = match (curve.checkpoints.first(), curve.checkpoints.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::Structural("GE curve has no checkpoints".into())),
    };
    if area.n_a < first || area.n_a > last {
        return Err(Error::Structural(format!(
            "N_a {} outside the curve's checkpoint range [{first}, {last}]",
            area.n_a
        )));
    }
    let end = bounded_len(curve, area.n_a);
    match (cfg.case, area.v) {
        (PersistenceCase::Soft, None) => {
            let v = soft_v(curve, end, area.w, cfg.mode);
            Ok(Hit {
                hit: v.is_some(),
                v,
            })
        }
        (PersistenceCase::Greedy(v), fixed) if fixed.is_none() || fixed == Some(v) => {
            if v > area.n_a {
                return Err(Error::Domain(format!("v {v} exceeds N_a {}", area.n_a)));
            }
            let start = curve.checkpoints.partition_point(|&c| c < v);
            if start >= end {
                return Err(Error::Structural(format!(
                    "no checkpoint falls inside [{v}, {}]",
                    area.n_a
                )));
            }
            let hit = cfg.mode.persists(&curve.values[start..end], area.w);
            Ok(Hit { hit, v: Some(v) })
        }
        (case, v) => Err(Error::Structural(format!(
            "area lower bound {v:?} disagrees with persistence case {case:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochEntry {
    pub epoch: usize,
    pub hit: bool,
    pub v: Option<usize>,
    /// Counter value after this epoch.
    pub consecutive_hits: usize,
}

/// Patience counter. Misses reset the run of hits to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorState {
    patience: usize,
    consecutive_hits: usize,
    epoch_log: Vec<EpochEntry>,
    stopped_at: Option<usize>,
}

impl MonitorState {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Domain("patience must be at least 1".into()));
        }
        Ok(MonitorState {
            patience,
            consecutive_hits: 0,
            epoch_log: Vec::new(),
            stopped_at: None,
        })
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn consecutive_hits(&self) -> usize {
        self.consecutive_hits
    }

    pub fn epoch_log(&self) -> &[EpochEntry] {
        &self.epoch_log
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    /// Feeds an already-decided hit or miss.
    pub fn record(&mut self, epoch: usize, hit: bool, v: Option<usize>) -> Result<Decision> {
        if let Some(stop) = self.stopped_at {
            return Err(Error::Usage(format!(
                "monitor already stopped at epoch {stop}; epoch {epoch} not accepted"
            )));
        }
        if let Some(prev) = self.epoch_log.last() {
            if epoch <= prev.epoch {
                return Err(Error::Usage(format!(
                    "epoch {epoch} observed after epoch {}",
                    prev.epoch
                )));
            }
        }
        self.consecutive_hits = if hit { self.consecutive_hits + 1 } else { 0 };
        self.epoch_log.push(EpochEntry {
            epoch,
            hit,
            v,
            consecutive_hits: self.consecutive_hits,
        });
        if self.consecutive_hits == self.patience {
            self.stopped_at = Some(epoch);
            Ok(Decision::Stop(epoch))
        } else {
            Ok(Decision::Continue)
        }
    }

    pub fn observe_epoch(
        &mut self,
        epoch: usize,
        curve: &GeCurve,
        area: &AreaOfHit,
        cfg: &PersistenceConfig,
    ) -> Result<Decision> {
        if self.stopped_at.is_some() {
            return self.record(epoch, false, None);
        }
        let hit = persistence_hit(curve, area, cfg)?;
        self.record(epoch, hit.hit, hit.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub curve: GeCurve,
    pub hit: bool,
    pub v: Option<usize>,
    pub consecutive_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub epochs: Vec<EpochReport>,
    pub stopped_at: Option<usize>,
}

impl MonitorReport {
    pub fn hit_epochs(&self) -> Vec<usize> {
        self.epochs
            .iter()
            .filter(|e| e.hit)
            .map(|e| e.epoch)
            .collect()
    }

    /// Writes `epoch,hit,v,consecutive_hits,stopped` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "hit", "v", "consecutive_hits", "stopped"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.hit.to_string(),
                e.v.map(|v| v.to_string()).unwrap_or_default(),
                e.consecutive_hits.to_string(),
                (self.stopped_at == Some(e.epoch)).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Lays out `dir/monitor.csv` and `dir/<epoch>/ge.csv`.
    pub fn write_run_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("monitor.csv");
        self.write_csv(File::create(&path).map_err(|e| Error::io(&path, e))?)?;
        for e in &self.epochs {
            let epoch_dir = dir.join(e.epoch.to_string());
            fs::create_dir_all(&epoch_dir).map_err(|err| Error::io(&epoch_dir, err))?;
            e.curve.save_csv(&epoch_dir.join("ge.csv"))?;
        }
        Ok(())
    }
}

/// GE configuration used for `epoch`: the trace orders are re-drawn every
/// epoch from the root seed.
pub fn epoch_ge_config(ge_cfg: &GeConfig, epoch: usize) -> GeConfig {
    GeConfig {
        seed: derive_seed(ge_cfg.seed, "epoch", epoch as u64),
        ..*ge_cfg
    }
}

/// Checks that curves produced under `ge_cfg` can be tested against `area`,
/// without computing any of them.
pub fn validate_setup(ge_cfg: &GeConfig, area: &AreaOfHit, cfg: &PersistenceConfig) -> Result<()> {
    ge_cfg.validate()?;
    if area.n_a > ge_cfg.max_traces {
        return Err(Error::Structural(format!(
            "N_a {} exceeds the {} traces each GE curve consumes",
            area.n_a, ge_cfg.max_traces
        )));
    }
    let checkpoints = ge_cfg.checkpoints();
    let probe = GeCurve {
        values: vec![0.0; checkpoints.len()],
        checkpoints,
        n_attacks: ge_cfg.n_attacks,
    };
    persistence_hit(&probe, area, cfg).map(|_| ())
}

/// Runs the monitor over an epoch source, numbering epochs from 1 and
/// pulling no further epochs once it stops.
pub fn monitor_training<I>(
    epochs: I,
    ge_cfg: &GeConfig,
    area: &AreaOfHit,
    cfg: &PersistenceConfig,
    patience: usize,
) -> Result<MonitorReport>
where
    I: IntoIterator<Item = Result<AttackSet>>,
{
    validate_setup(ge_cfg, area, cfg)?;
    let mut state = MonitorState::new(patience)?;
    let mut reports = Vec::new();
    for (idx, attack) in epochs.into_iter().enumerate() {
        let epoch = idx + 1;
        let attack = attack?;
        let curve = ge_curve_optimized(&attack, &epoch_ge_config(ge_cfg, epoch))?;
        let decision = state.observe_epoch(epoch, &curve, area, cfg)?;
        let entry = *state.epoch_log().last().expect("entry just recorded");
        reports.push(EpochReport {
            epoch,
            curve,
            hit: entry.hit,
            v: entry.v,
            consecutive_hits: entry.consecutive_hits,
        });
        if let Decision::Stop(_) = decision {
            break;
        }
    }
    if reports.is_empty() {
        return Err(Error::Structural("epoch source yielded no epochs".into()));
    }
    Ok(MonitorReport {
        epochs: reports,
        stopped_at: state.stopped_at(),
    })
}
