//! Trial loop: apply feedforward, simulate the closed loop, learn.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{fir_basis, identity_basis, physical_basis, BasisMatrix};
use crate::error::{Error, Result};
use crate::lifted::{closed_loop_operators, LiftedOperator, TransferFunction};
use crate::metrics::{loss_factor, LossFactor};
use crate::norm_optimal::{lq_matrices_with, no_update, UpdateMatrices, Weights};
use crate::par::{self, Execution};
use crate::sparse::{
    predictor_matrix, response_vector, sparse_update, LarsPath, RegressionProblem,
};
use crate::trajectory::{fourth_order_reference, MotionProfile, ReferenceSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Sparse selection from a FIR candidate basis.
    Sbf,
    /// Physical basis `[v a s]`.
    Bf,
    /// Full FIR basis, quadratic update.
    NoFir,
    /// Identity basis, quadratic update.
    No,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sbf => "sbf",
            Method::Bf => "bf",
            Method::NoFir => "no_fir",
            Method::No => "no",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedProfile {
    pub name: String,
    pub profile: MotionProfile,
}

/// Trials `first..=last` (1-based) run on `profile`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub profile: String,
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub plant: TransferFunction,
    pub controller: TransferFunction,
    pub trial_length: usize,
    pub trials: usize,
    pub method: Method,
    /// Candidate count of the FIR basis.
    pub n_theta: usize,
    pub preview: usize,
    /// Target number of nonzero parameters for `Method::Sbf`.
    pub cardinality: usize,
    pub weights: Weights,
    pub noise_std: f64,
    pub seed: u64,
    pub profiles: Vec<NamedProfile>,
    pub schedule: Vec<ScheduleEntry>,
    pub reset_on_switch: bool,
    /// The learner uses `gain * J` instead of the simulated `J`.
    pub learner_gain: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.trial_length;
        if n == 0 {
            return Err(Error::config(
                "experiment.trial_length",
                "must be at least 1",
            ));
        }
        if self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config(
                "experiment.noise_std",
                "must be finite and >= 0",
            ));
        }
        if !(self.learner_gain.is_finite() && self.learner_gain != 0.0) {
            return Err(Error::config("learner.gain", "must be finite and nonzero"));
        }
        if self.weights.len() != n {
            return Err(Error::config(
                "weights",
                format!("expected {n} samples, got {}", self.weights.len()),
            ));
        }
        if !self.weights.weights_error() {
            return Err(Error::config(
                "weights.error",
                "needs at least one positive entry",
            ));
        }
        if self.plant.sample_time() != self.controller.sample_time() {
            return Err(Error::config(
                "controller.sample_time",
                "must equal the plant sample time",
            ));
        }
        if matches!(self.method, Method::Sbf | Method::NoFir) {
            if self.n_theta == 0 || self.n_theta > n {
                return Err(Error::config(
                    "basis.n_theta",
                    format!("must lie in 1..={n}, got {}", self.n_theta),
                ));
            }
            if self.preview >= self.n_theta {
                return Err(Error::config(
                    "basis.preview",
                    format!("must be smaller than n_theta = {}", self.n_theta),
                ));
            }
        }
        if self.method == Method::Sbf && (self.cardinality == 0 || self.cardinality > self.n_theta)
        {
            return Err(Error::config(
                "basis.cardinality",
                format!("must lie in 1..={}, got {}", self.n_theta, self.cardinality),
            ));
        }
        if self.profiles.is_empty() {
            return Err(Error::config(
                "profiles",
                "at least one profile is required",
            ));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if self.profiles[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::config(
                    format!("profiles[{i}].name"),
                    "duplicate profile name",
                ));
            }
            p.profile
                .validate()
                .map_err(|e| Error::config(format!("profiles[{i}]"), e.to_string()))?;
        }
        let mut owner = vec![None; self.trials];
        for (i, s) in self.schedule.iter().enumerate() {
            let at = format!("schedule[{i}]");
            if !self.profiles.iter().any(|p| p.name == s.profile) {
                return Err(Error::config(
                    format!("{at}.profile"),
                    format!("unknown profile `{}`", s.profile),
                ));
            }
            if s.first == 0 || s.first > s.last || s.last > self.trials {
                return Err(Error::config(
                    at,
                    format!(
                        "range {}..={} must lie within 1..={}",
                        s.first, s.last, self.trials
                    ),
                ));
            }
            for t in s.first..=s.last {
                if let Some(other) = owner[t - 1] {
                    return Err(Error::config(
                        at,
                        format!("trial {t} already covered by schedule[{other}]"),
                    ));
                }
                owner[t - 1] = Some(i);
            }
        }
        if let Some(t) = owner.iter().position(Option::is_none) {
            return Err(Error::config(
                "schedule",
                format!("trial {} is not covered", t + 1),
            ));
        }
        Ok(())
    }

    /// Profile name for each trial, index 0 = trial 1.
    pub fn trial_profiles(&self) -> Vec<&str> {
        let mut out = vec![""; self.trials];
        for s in &self.schedule {
            for t in s.first..=s.last {
                out[t - 1] = &s.profile;
            }
        }
        out
    }

    /// First trial on a reference different from its predecessor.
    pub fn first_switch(&self) -> Option<usize> {
        let names = self.trial_profiles();
        (1..names.len())
            .find(|&i| names[i] != names[i - 1])
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// 1-based trial index.
    pub trial: usize,
    pub reference: String,
    pub theta: DVector<f64>,
    pub feedforward: DVector<f64>,
    pub error: DVector<f64>,
    pub error_norm: f64,
    pub nonzeros: usize,
    /// Seconds spent computing the parameters for the next trial.
    pub update_seconds: f64,
    /// Support selected by the sparse update after this trial (`Method::Sbf` only).
    pub support: Option<Vec<usize>>,
    pub path: Option<LarsPath>,
}

/// `e = S r - J f - S v`.
pub fn run_trial(
    s: &LiftedOperator,
    j: &LiftedOperator,
    r: &DVector<f64>,
    f: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(s.apply(r)? - j.apply(f)? - s.apply(v)?)
}

enum Learner {
    Quadratic(UpdateMatrices),
    Sparse {
        x: RegressionProblem,
        jpsi: DMatrix<f64>,
    },
}

struct Task {
    reference: ReferenceSignal,
    basis: BasisMatrix,
    learner: Learner,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_paths: bool,
    pub exec: Execution,
}

/// Closed loop and references, built once per configuration.
pub struct Experiment {
    cfg: ExperimentConfig,
    s: LiftedOperator,
    j: LiftedOperator,
    references: HashMap<String, ReferenceSignal>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (s, j) = closed_loop_operators(&cfg.plant, &cfg.controller, cfg.trial_length)?;
        let mut references = HashMap::new();
        for p in &cfg.profiles {
            let r = fourth_order_reference(&p.profile, cfg.trial_length)
                .map_err(|e| Error::config(format!("profiles.{}", p.name), e.to_string()))?;
            references.insert(p.name.clone(), r);
        }
        Ok(Self {
            cfg,
            s,
            j,
            references,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn sensitivity(&self) -> &LiftedOperator {
        &self.s
    }

    pub fn process_sensitivity(&self) -> &LiftedOperator {
        &self.j
    }

    pub fn reference(&self, name: &str) -> Option<&ReferenceSignal> {
        self.references.get(name)
    }

    pub fn basis_for(&self, reference: &ReferenceSignal) -> Result<BasisMatrix> {
        match self.cfg.method {
            Method::Sbf | Method::NoFir => {
                fir_basis(&reference.r, self.cfg.n_theta, self.cfg.preview)
            }
            Method::Bf => physical_basis(reference),
            Method::No => identity_basis(self.cfg.trial_length),
        }
    }

    fn task(&self, name: &str, learner_j: &LiftedOperator, exec: Execution) -> Result<Task> {
        let reference = self.references[name].clone();
        let basis = self.basis_for(&reference)?;
        let learner = match self.cfg.method {
            Method::Sbf => {
                let jpsi = learner_j.apply_columns(basis.matrix(), exec)?;
                let x = predictor_matrix(&jpsi, &basis, &self.cfg.weights)?;
                let y = DVector::zeros(x.nrows());
                Learner::Sparse {
                    x: RegressionProblem::new(x, y)?,
                    jpsi,
                }
            }
            _ => Learner::Quadratic(lq_matrices_with(
                learner_j,
                &basis,
                &self.cfg.weights,
                exec,
            )?),
        };
        Ok(Task {
            reference,
            basis,
            learner,
        })
    }

    /// Noise sequence for every trial, drawn up front so the stream does not depend on the method.
    fn noise(&self) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let n = self.cfg.trial_length;
        (0..self.cfg.trials)
            .map(|_| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        self.cfg.noise_std * z
                    }),
                )
            })
            .collect()
    }

    pub fn run(&self) -> Result<Vec<TrialRecord>> {
        self.run_with(RunOptions::default())
    }

    pub fn run_with(&self, opts: RunOptions) -> Result<Vec<TrialRecord>> {
        let cfg = &self.cfg;
        let learner_j = if cfg.learner_gain == 1.0 {
            self.j.clone()
        } else {
            self.j.scaled(cfg.learner_gain)
        };
        let names = cfg.trial_profiles();
        let noise = self.noise();
        let mut tasks: HashMap<&str, Task> = HashMap::new();
        let mut theta: Option<DVector<f64>> = None;
        let mut records = Vec::with_capacity(cfg.trials);

        for (idx, &name) in names.iter().enumerate() {
            let trial = idx + 1;
            let annotate = |e: Error| Error::Trial {
                trial,
                source: Box::new(e),
            };
            if !tasks.contains_key(name) {
                let t = self.task(name, &learner_j, opts.exec).map_err(annotate)?;
                tasks.insert(name, t);
            }
            let task = &tasks[name];
            let switched = idx > 0 && names[idx - 1] != name;
            let th = match theta.take() {
                Some(t) if !(switched && cfg.reset_on_switch) => t,
                _ => DVector::zeros(task.basis.n_params()),
            };
            let f = task.basis.feedforward(&th).map_err(annotate)?;
            let e = run_trial(&self.s, &self.j, &task.reference.r, &f, &noise[idx])
                .map_err(annotate)?;

            let start = Instant::now();
            let (next, support, path) = match &task.learner {
                Learner::Quadratic(m) => (no_update(&th, &e, m).map_err(annotate)?, None, None),
                Learner::Sparse { x, jpsi } => {
                    let y = response_vector(&e, &th, jpsi, &task.basis, &cfg.weights)
                        .map_err(annotate)?;
                    let prob = x.with_response(y).map_err(annotate)?;
                    let (path, sol) = sparse_update(&prob, cfg.cardinality).map_err(annotate)?;
                    (
                        sol.theta,
                        Some(sol.support),
                        opts.keep_paths.then_some(path),
                    )
                }
            };
            let update_seconds = start.elapsed().as_secs_f64();

            records.push(TrialRecord {
                trial,
                reference: name.to_string(),
                nonzeros: th.iter().filter(|&&x| x != 0.0).count(),
                theta: th,
                feedforward: f,
                error_norm: e.norm(),
                error: e,
                update_seconds,
                support,
                path,
            });
            theta = Some(next);
        }
        Ok(records)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    Experiment::new(cfg.clone())?.run()
}

pub fn error_norms(records: &[TrialRecord]) -> Vec<f64> {
    records.iter().map(|r| r.error_norm).collect()
}

pub fn record_loss_factor(records: &[TrialRecord], switch_trial: usize) -> Option<LossFactor> {
    loss_factor(&error_norms(records), switch_trial)
}

/// One experiment per target cardinality, run concurrently when `exec` allows.
pub fn run_cardinality_sweep(
    cfg: &ExperimentConfig,
    cardinalities: &[usize],
    exec: Execution,
) -> Result<Vec<(usize, Vec<TrialRecord>)>> {
    if cfg.method != Method::Sbf {
        return Err(Error::config(
            "experiment.method",
            "a cardinality sweep needs method `sbf`",
        ));
    }
    let experiment = Experiment::new(cfg.clone())?;
    let inner = RunOptions {
        keep_paths: false,
        exec: Execution::Sequential,
    };
    par::try_map_slice(exec, cardinalities, |&k| {
        let mut c = cfg.clone();
        c.cardinality = k;
        c.validate()?;
        let exp = Experiment {
            cfg: c,
            s: experiment.s.clone(),
            j: experiment.j.clone(),
            references: experiment.references.clone(),
        };
        Ok((k, exp.run_with(inner)?))
    })
}

/// Same configuration under several noise seeds.
pub fn run_seed_batch(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<(u64, Vec<TrialRecord>)>> {
    let experiment = Experiment::new(cfg.clone())?;
    let inner = RunOptions {
        keep_paths: false,
        exec: Execution::Sequential,
    };
    par::try_map_slice(exec, seeds, |&seed| {
        let mut c = cfg.clone();
        c.seed = seed;
        let exp = Experiment {
            cfg: c,
            s: experiment.s.clone(),
            j: experiment.j.clone(),
            references: experiment.references.clone(),
        };
        Ok((seed, exp.run_with(inner)?))
    })
}
