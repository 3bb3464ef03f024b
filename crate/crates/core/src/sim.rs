//! Synthetic training runs.
//!
//! Each epoch's "model" outputs `softmax(theta_e * onehot(true_label) + noise)`
//! per attack trace, so the quality of the predictions, and therefore the GE
//! curve, follows the per-epoch signal strength `theta_e`. Plaintexts are
//! drawn once per run and shared by every epoch.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sca::{AttackSet, Keyspace};
use crate::seed::{derive_seed, derived_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSchedule {
    pub n_epochs: usize,
    /// Signal strength per epoch, indexed from 0.
    pub signal: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl LeakageSchedule {
    pub fn new(signal: Vec<f64>, noise_sigma: f64, seed: u64) -> Result<Self> {
        let schedule = LeakageSchedule {
            n_epochs: signal.len(),
            signal,
            noise_sigma,
            seed,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn flat(n_epochs: usize, theta: f64) -> Result<Self> {
        Self::new(vec![theta; n_epochs], 1.0, 0)
    }

    /// Linear rise from 0 at the first epoch to `theta_max` at the last.
    pub fn ramp(n_epochs: usize, theta_max: f64) -> Result<Self> {
        let denom = n_epochs.saturating_sub(1).max(1) as f64;
        let signal = (0..n_epochs)
            .map(|e| theta_max * e as f64 / denom)
            .collect();
        Self::new(signal, 1.0, 0)
    }

    /// Rises linearly from 0 to `theta_max` at `peak_epoch`, holds for
    /// `plateau` epochs (the peak included), then decays linearly toward 0.
    pub fn overfit(
        n_epochs: usize,
        peak_epoch: usize,
        plateau: usize,
        theta_max: f64,
    ) -> Result<Self> {
        if peak_epoch == 0 || peak_epoch >= n_epochs {
            return Err(Error::Domain(format!(
                "peak epoch must satisfy 0 < peak < n_epochs ({n_epochs}), got {peak_epoch}"
            )));
        }
        if plateau == 0 || peak_epoch + plateau > n_epochs {
            return Err(Error::Domain(format!(
                "plateau of {plateau} epochs from epoch {peak_epoch} does not fit in {n_epochs} epochs"
            )));
        }
        let last_high = peak_epoch + plateau - 1;
        let tail = (n_epochs - last_high) as f64;
        let signal = (0..n_epochs)
            .map(|e| {
                if e < peak_epoch {
                    theta_max * e as f64 / peak_epoch as f64
                } else if e <= last_high {
                    theta_max
                } else {
                    theta_max * (1.0 - (e - last_high) as f64 / tail)
                }
            })
            .collect();
        Self::new(signal, 1.0, 0)
    }

    pub fn with_noise(mut self, noise_sigma: f64) -> Result<Self> {
        self.noise_sigma = noise_sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.signal.len() != self.n_epochs {
            return Err(Error::Structural(format!(
                "schedule declares {} epochs but carries {} signal values",
                self.n_epochs,
                self.signal.len()
            )));
        }
        if let Some(bad) = self.signal.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::Domain(format!(
                "signal strength {bad} must be finite and >= 0"
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Domain(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let schedule: LeakageSchedule =
            serde_json::from_slice(&raw).map_err(|e| Error::json(path, e))?;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Named schedules shipped with the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ramp,
    Overfit,
    Flat,
}

/// Attack-set size the presets are sized against.
pub const PRESET_ATTACK_TRACES: usize = 5000;
/// `N_a` and GE geometry the presets are sized against.
pub const PRESET_N_A: usize = 500;
pub const PRESET_STEP: usize = 50;
pub const PRESET_ATTACKS: usize = 10;

pub const OVERFIT_EPOCHS: usize = 50;
/// Index of the first epoch at full strength in the `overfit` preset.
pub const OVERFIT_PEAK: usize = 10;
pub const OVERFIT_PLATEAU: usize = 10;
/// With the preset geometry, full persistence at `w = 0` starts to hold
/// around 80% of this strength, so a patience of 3 first completes on the
/// plateau.
pub const OVERFIT_THETA_MAX: f64 = 0.25;
pub const RAMP_EPOCHS: usize = 30;
pub const RAMP_THETA_MAX: f64 = 0.4;
pub const FLAT_EPOCHS: usize = 20;

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Ramp, Preset::Overfit, Preset::Flat];

    /// The preset schedule; `theta` overrides the peak (or, for `flat`,
    /// constant) signal strength.
    pub fn schedule(self, seed: u64, theta: Option<f64>) -> Result<LeakageSchedule> {
        let mut params = ScheduleParams::from_preset(self);
        if let Some(theta) = theta {
            params.theta = theta;
        }
        params.build(seed)
    }
}

/// Shape parameters of a preset-derived schedule, overridable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub preset: Preset,
    pub n_epochs: usize,
    /// Peak strength for `ramp`/`overfit`, the constant for `flat`.
    pub theta: f64,
    pub peak_epoch: usize,
    pub plateau: usize,
    pub noise_sigma: f64,
}

impl ScheduleParams {
    pub fn from_preset(preset: Preset) -> Self {
        let (n_epochs, theta) = match preset {
            Preset::Ramp => (RAMP_EPOCHS, RAMP_THETA_MAX),
            Preset::Overfit => (OVERFIT_EPOCHS, OVERFIT_THETA_MAX),
            Preset::Flat => (FLAT_EPOCHS, 0.0),
        };
        ScheduleParams {
            preset,
            n_epochs,
            theta,
            peak_epoch: OVERFIT_PEAK,
            plateau: OVERFIT_PLATEAU,
            noise_sigma: 1.0,
        }
    }

    /// Applies a named override. Returns `Ok(false)` for names that are not
    /// schedule parameters.
    pub fn set(&mut self, name: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(name: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Domain(format!("{name}: cannot parse {value:?}")))
        }
        match name {
            "preset" => self.preset = value.parse()?,
            "n_epochs" | "epochs" => self.n_epochs = num(name, value)?,
            "theta" | "theta_max" => self.theta = num(name, value)?,
            "peak_epoch" => self.peak_epoch = num(name, value)?,
            "plateau" => self.plateau = num(name, value)?,
            "noise_sigma" | "noise" => self.noise_sigma = num(name, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn build(&self, seed: u64) -> Result<LeakageSchedule> {
        let schedule = match self.preset {
            Preset::Ramp => LeakageSchedule::ramp(self.n_epochs, self.theta)?,
            Preset::Overfit => {
                LeakageSchedule::overfit(self.n_epochs, self.peak_epoch, self.plateau, self.theta)?
            }
            Preset::Flat => LeakageSchedule::flat(self.n_epochs, self.theta)?,
        };
        Ok(schedule.with_noise(self.noise_sigma)?.with_seed(seed))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Ramp => "ramp",
            Preset::Overfit => "overfit",
            Preset::Flat => "flat",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(Preset::Ramp),
            "overfit" => Ok(Preset::Overfit),
            "flat" => Ok(Preset::Flat),
            other => Err(Error::Domain(format!(
                "unknown preset {other:?} (expected ramp, overfit or flat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochBatch {
    pub epoch: usize,
    pub attack: AttackSet,
}

/// The run's plaintexts, drawn uniformly once from the schedule seed.
pub fn run_plaintexts(seed: u64, n_traces: usize, keyspace: Keyspace) -> Vec<u8> {
    let mut rng = derived_rng(seed, "plaintexts", 0);
    (0..n_traces)
        .map(|_| rng.random_range(0..keyspace.size()) as u8)
        .collect()
}

fn softmax_into(scores: &mut [f64], out: &mut [f32]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for (o, s) in out.iter_mut().zip(scores.iter()) {
        *o = (*s / total) as f32;
    }
}

pub fn generate_epoch(
    schedule: &LeakageSchedule,
    epoch: usize,
    n_traces: usize,
    keyspace: usize,
    true_key: u8,
) -> Result<EpochBatch> {
    schedule.validate()?;
    let keyspace = Keyspace::new(keyspace)?;
    if epoch >= schedule.n_epochs {
        return Err(Error::Domain(format!(
            "epoch {epoch} outside schedule of {} epochs",
            schedule.n_epochs
        )));
    }
    if true_key as usize >= keyspace.size() {
        return Err(Error::Domain(format!(
            "true key {true_key} outside keyspace of size {}",
            keyspace.size()
        )));
    }
    let width = keyspace.size();
    let theta = schedule.signal[epoch];
    let sigma = schedule.noise_sigma;
    let plaintexts = run_plaintexts(schedule.seed, n_traces, keyspace);
    let epoch_seed = derive_seed(schedule.seed, "epoch-noise", epoch as u64);

    let mut predictions = vec![0.0f32; n_traces * width];
    predictions
        .par_chunks_mut(width)
        .zip(plaintexts.par_iter())
        .enumerate()
        .for_each_init(
            || vec![0.0f64; width],
            |scores, (trace, (row, &plaintext))| {
                let mut rng = derived_rng(epoch_seed, "trace", trace as u64);
                for s in scores.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *s = sigma * z;
                }
                scores[keyspace.label(plaintext, true_key)] += theta;
                softmax_into(scores, row);
            },
        );

    let attack = AttackSet::new(predictions, plaintexts, true_key, width)?;
    Ok(EpochBatch { epoch, attack })
}

/// Lazily generated epochs, in order, for the monitor to consume.
pub fn epoch_source(
    schedule: &LeakageSchedule,
    n_traces: usize,
    keyspace: usize,
    true_key: u8,
) -> impl Iterator<Item = Result<AttackSet>> + '_ {
    (0..schedule.n_epochs)
        .map(move |e| generate_epoch(schedule, e, n_traces, keyspace, true_key).map(|b| b.attack))
}
