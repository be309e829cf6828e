//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::{ExperimentConfig, Method, NamedProfile, ScheduleEntry};
use crate::error::{Error, Result};
use crate::lifted::TransferFunction;
use crate::norm_optimal::Weights;
use crate::trajectory::MotionProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: RawExperiment,
    #[serde(default)]
    pub basis: RawBasis,
    #[serde(default)]
    pub weights: RawWeights,
    pub plant: RawSystem,
    pub controller: Option<RawSystem>,
    #[serde(default)]
    pub learner: RawLearner,
    #[serde(default)]
    pub profiles: Vec<RawProfile>,
    #[serde(default)]
    pub schedule: Vec<RawSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    pub trial_length: usize,
    pub trials: usize,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `1e-6` times the largest reference amplitude.
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub reset_on_switch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBasis {
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_preview")]
    pub preview: usize,
    #[serde(default = "default_cardinality")]
    pub cardinality: usize,
}

fn default_n_theta() -> usize {
    14
}

fn default_preview() -> usize {
    3
}

fn default_cardinality() -> usize {
    9
}

impl Default for RawBasis {
    fn default() -> Self {
        Self {
            n_theta: default_n_theta(),
            preview: default_preview(),
            cardinality: default_cardinality(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWeights {
    #[serde(default = "one")]
    pub error: f64,
    #[serde(default = "default_effort")]
    pub effort: f64,
    #[serde(default)]
    pub change: f64,
    /// Optional per-sample diagonals, one value per line, relative to the config file.
    pub error_file: Option<PathBuf>,
    pub effort_file: Option<PathBuf>,
    pub change_file: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn default_effort() -> f64 {
    1e-6
}

impl Default for RawWeights {
    fn default() -> Self {
        Self {
            error: 1.0,
            effort: default_effort(),
            change: 0.0,
            error_file: None,
            effort_file: None,
            change_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystem {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub sample_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLearner {
    #[serde(default = "one")]
    pub gain: f64,
}

impl Default for RawLearner {
    fn default() -> Self {
        Self { gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    pub name: String,
    pub displacement: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub snap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub profile: String,
    pub first: usize,
    pub last: usize,
}

fn default_profile() -> RawProfile {
    RawProfile {
        name: "slow".into(),
        displacement: 0.02,
        velocity: 1.0,
        acceleration: 80.0,
        jerk: 1e5,
        snap: 1e8,
    }
}

pub const DEFAULT_SAMPLE_TIME: f64 = 1e-3;

fn read_diagonal(path: &Path, n: usize, key: &str) -> Result<DVector<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::config(key, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(key, format!("{}: {e}", path.display())))?;
        let field = rec.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(Error::config(
                    key,
                    format!("{}: line {} is not a number", path.display(), line + 1),
                ))
            }
        }
    }
    if out.len() != n {
        return Err(Error::config(
            key,
            format!("{} has {} values, expected {n}", path.display(), out.len()),
        ));
    }
    Ok(DVector::from_vec(out))
}

impl RawConfig {
    /// Fills every defaulted field in place so that the serialized form is self-contained.
    pub fn resolve_defaults(&mut self) {
        if self.profiles.is_empty() {
            self.profiles.push(default_profile());
        }
        if self.schedule.is_empty() {
            self.schedule.push(RawSchedule {
                profile: self.profiles[0].name.clone(),
                first: 1,
                last: self.experiment.trials,
            });
        }
        let ts = *self.plant.sample_time.get_or_insert(DEFAULT_SAMPLE_TIME);
        let controller = self.controller.get_or_insert(RawSystem {
            numerator: vec![0.0],
            denominator: vec![1.0],
            sample_time: None,
        });
        controller.sample_time.get_or_insert(ts);
    }

    /// Validated configuration. Relative weight files resolve against `base_dir`.
    pub fn into_config(mut self, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
        self.resolve_defaults();
        let n = self.experiment.trial_length;
        let ts = self.plant.sample_time.unwrap_or(DEFAULT_SAMPLE_TIME);
        let plant = TransferFunction::new(
            self.plant.numerator.clone(),
            self.plant.denominator.clone(),
            ts,
        )
        .map_err(|e| Error::config("plant", e.to_string()))?;
        let c = self.controller.clone().expect("filled by resolve_defaults");
        let controller =
            TransferFunction::new(c.numerator, c.denominator, c.sample_time.unwrap_or(ts))
                .map_err(|e| Error::config("controller", e.to_string()))?;

        let profiles: Vec<NamedProfile> = self
            .profiles
            .iter()
            .map(|p| NamedProfile {
                name: p.name.clone(),
                profile: MotionProfile {
                    displacement: p.displacement,
                    max_velocity: p.velocity,
                    max_acceleration: p.acceleration,
                    max_jerk: p.jerk,
                    max_snap: p.snap,
                    sample_time: ts,
                },
            })
            .collect();

        let diag = |file: &Option<PathBuf>, scalar: f64, key: &str| -> Result<DVector<f64>> {
            match file {
                Some(p) => {
                    let path = match base_dir {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.clone(),
                    };
                    Ok(read_diagonal(&path, n, key)? * scalar)
                }
                None => Ok(DVector::from_element(n, scalar)),
            }
        };
        let w = &self.weights;
        let weights = Weights::new(
            diag(&w.error_file, w.error, "weights.error_file")?,
            diag(&w.effort_file, w.effort, "weights.effort_file")?,
            diag(&w.change_file, w.change, "weights.change_file")?,
        )
        .map_err(|e| Error::config("weights", e.to_string()))?;

        let noise_std = match self.experiment.noise_std {
            Some(s) => s,
            None => {
                1e-6 * self
                    .profiles
                    .iter()
                    .map(|p| p.displacement.abs())
                    .fold(0.0, f64::max)
            }
        };

        let cfg = ExperimentConfig {
            plant,
            controller,
            trial_length: n,
            trials: self.experiment.trials,
            method: self.experiment.method,
            n_theta: self.basis.n_theta,
            preview: self.basis.preview,
            cardinality: self.basis.cardinality,
            weights,
            noise_std,
            seed: self.experiment.seed,
            profiles,
            schedule: self
                .schedule
                .iter()
                .map(|s| ScheduleEntry {
                    profile: s.profile.clone(),
                    first: s.first,
                    last: s.last,
                })
                .collect(),
            reset_on_switch: self.experiment.reset_on_switch,
            learner_gain: self.learner.gain,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let path = e
            .span()
            .map(|s| format!("line {}", text[..s.start].lines().count().max(1)))
            .unwrap_or_else(|| "document".into());
        Error::config(path, message)
    })
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    parse_raw(text)?.into_config(base_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    E1,
    E2,
    E3,
    E4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::E1, Preset::E2, Preset::E3, Preset::E4];

    pub fn name(self) -> &'static str {
        match self {
            Preset::E1 => "E1-sbf",
            Preset::E2 => "E2-bf",
            Preset::E3 => "E3-no_fir",
            Preset::E4 => "E4-no",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Preset::E1 => include_str!("../presets/e1_sbf.toml"),
            Preset::E2 => include_str!("../presets/e2_bf.toml"),
            Preset::E3 => include_str!("../presets/e3_no_fir.toml"),
            Preset::E4 => include_str!("../presets/e4_no.toml"),
        }
    }

    pub fn raw(self) -> RawConfig {
        parse_raw(self.text()).expect("shipped presets parse")
    }

    pub fn config(self) -> ExperimentConfig {
        self.raw()
            .into_config(None)
            .expect("shipped presets are valid")
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_uppercase();
        Preset::ALL
            .into_iter()
            .find(|p| key == p.name().to_ascii_uppercase() || key == p.name()[..2])
            .ok_or_else(|| {
                Error::config(
                    "preset",
                    format!("unknown preset `{s}`; expected E1, E2, E3 or E4"),
                )
            })
    }
}
