//! Deterministic CSV artifacts and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Preset, RawConfig};
use crate::engine::{
    record_loss_factor, run_cardinality_sweep, Experiment, ExperimentConfig, Method, RunOptions,
    TrialRecord,
};
use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub config_hash: String,
    pub output_dir: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Default)]
pub struct RunCommand {
    pub seed: Option<u64>,
    /// Target cardinalities to sweep, `sbf` only.
    pub sweep: Option<Vec<usize>>,
    pub dump_path: bool,
    /// Also write `timing.csv` with per-trial update wall time (not reproducible).
    pub timing: bool,
    pub exec: Execution,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let to_io = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(to_io)?;
        for row in rows {
            w.write_record(&row).map_err(to_io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        self.bytes(name, &bytes)
    }

    fn finish(mut self, config_path: Option<&Path>, config_hash: String) -> Result<RunManifest> {
        self.artifacts.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = RunManifest {
            config_path: config_path.map(|p| p.display().to_string()),
            config_hash,
            output_dir: self.dir.display().to_string(),
            artifacts: self.artifacts,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn join_indices(ix: &[usize]) -> String {
    ix.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn trials_rows(records: &[TrialRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                r.reference.clone(),
                fmt_f64(r.error_norm),
                r.nonzeros.to_string(),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub parameters: usize,
    pub switch_trial: Option<usize>,
    pub loss_factor: Option<f64>,
    pub terminal_error: f64,
    pub terminal_nonzeros: usize,
}

pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Summary {
    let switch_trial = cfg.first_switch();
    let last = records.last().expect("at least one trial");
    Summary {
        method: cfg.method,
        parameters: last.theta.len(),
        switch_trial,
        loss_factor: switch_trial
            .and_then(|s| record_loss_factor(records, s))
            .map(|l| l.value),
        terminal_error: last.error_norm,
        terminal_nonzeros: last.nonzeros,
    }
}

const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "parameters",
    "switch_trial",
    "loss_factor",
    "terminal_error",
    "terminal_nonzeros",
];

fn summary_row(s: &Summary) -> Vec<String> {
    vec![
        s.method.to_string(),
        s.parameters.to_string(),
        s.switch_trial.map(|t| t.to_string()).unwrap_or_default(),
        s.loss_factor.map(fmt_f64).unwrap_or_default(),
        fmt_f64(s.terminal_error),
        s.terminal_nonzeros.to_string(),
    ]
}

fn resolved(mut raw: RawConfig) -> Result<(RawConfig, String, String)> {
    raw.resolve_defaults();
    let text = toml::to_string(&raw).map_err(|e| Error::config("document", e.to_string()))?;
    let hash = sha256_hex(text.as_bytes());
    Ok((raw, text, hash))
}

/// Runs one configuration and writes every artifact into `out_dir`.
pub fn run_command(
    raw: RawConfig,
    config_path: Option<&Path>,
    out_dir: &Path,
    opts: &RunCommand,
) -> Result<RunManifest> {
    let mut raw = raw;
    if let Some(seed) = opts.seed {
        raw.experiment.seed = seed;
    }
    let (raw, text, hash) = resolved(raw)?;
    let base = config_path.and_then(Path::parent);
    let cfg = raw.into_config(base)?;
    if opts.sweep.is_some() && cfg.method != Method::Sbf {
        return Err(Error::config(
            "experiment.method",
            "--sweep needs method `sbf`",
        ));
    }
    let experiment = Experiment::new(cfg.clone())?;
    let records = experiment.run_with(RunOptions {
        keep_paths: opts.dump_path,
        exec: opts.exec,
    })?;

    let mut w = Writer::new(out_dir)?;
    w.bytes("config.resolved.toml", text.as_bytes())?;
    w.csv(
        "trials.csv",
        &["j", "reference", "error_norm", "nonzeros"],
        trials_rows(&records),
    )?;

    let last = records.last().expect("at least one trial");
    w.csv(
        "feedforward_final.csv",
        &["k", "f"],
        last.feedforward
            .iter()
            .enumerate()
            .map(|(k, f)| vec![k.to_string(), fmt_f64(*f)]),
    )?;

    if cfg.method == Method::Sbf {
        w.csv(
            "support.csv",
            &["j", "support"],
            records.iter().map(|r| {
                vec![
                    r.trial.to_string(),
                    join_indices(r.support.as_deref().unwrap_or(&[])),
                ]
            }),
        )?;
    }

    if opts.dump_path {
        let mut rows = Vec::new();
        for r in &records {
            if let Some(path) = &r.path {
                for (b, bp) in path.breakpoints.iter().enumerate() {
                    rows.push(vec![
                        r.trial.to_string(),
                        b.to_string(),
                        fmt_f64(bp.lambda),
                        join_indices(&bp.active),
                        fmt_f64(bp.coef.lp_norm(1)),
                    ]);
                }
            }
        }
        w.csv(
            "lars_path.csv",
            &["j", "breakpoint", "lambda", "active", "l1_norm"],
            rows,
        )?;
    }

    for p in &cfg.profiles {
        let r = experiment
            .reference(&p.name)
            .expect("references built for every profile");
        w.csv(
            &format!("reference_{}.csv", p.name),
            &["k", "r", "v", "a", "jk", "s"],
            (0..r.len()).map(|k| {
                vec![
                    k.to_string(),
                    fmt_f64(r.r[k]),
                    fmt_f64(r.v[k]),
                    fmt_f64(r.a[k]),
                    fmt_f64(r.jk[k]),
                    fmt_f64(r.s[k]),
                ]
            }),
        )?;
    }

    w.csv(
        "summary.csv",
        &SUMMARY_HEADER,
        [summary_row(&summarize(&cfg, &records))],
    )?;

    if let Some(ks) = &opts.sweep {
        let sweep = run_cardinality_sweep(&cfg, ks, opts.exec)?;
        w.csv(
            "sweep.csv",
            &["n_theta", "terminal_error"],
            sweep.iter().map(|(k, recs)| {
                vec![
                    k.to_string(),
                    fmt_f64(recs.last().expect("trials").error_norm),
                ]
            }),
        )?;
        let mut rows = Vec::new();
        for (k, recs) in &sweep {
            for mut row in trials_rows(recs) {
                row.insert(0, k.to_string());
                rows.push(row);
            }
        }
        w.csv(
            "sweep_trials.csv",
            &["n_theta", "j", "reference", "error_norm", "nonzeros"],
            rows,
        )?;
    }

    if opts.timing {
        w.csv(
            "timing.csv",
            &["j", "update_seconds"],
            records
                .iter()
                .map(|r| vec![r.trial.to_string(), fmt_f64(r.update_seconds)]),
        )?;
    }

    w.finish(config_path, hash)
}

/// Runs all four presets with a common seed and writes their loss factors side by side.
pub fn run_table(seed: Option<u64>, out_dir: &Path, exec: Execution) -> Result<RunManifest> {
    let presets = Preset::ALL;
    let mut texts = String::new();
    let mut configs = Vec::new();
    for p in presets {
        let mut raw = p.raw();
        if let Some(s) = seed {
            raw.experiment.seed = s;
        }
        let (raw, text, _) = resolved(raw)?;
        texts.push_str(&text);
        configs.push(raw.into_config(None)?);
    }
    let summaries = crate::par::try_map_slice(exec, &configs, |cfg| {
        let records = Experiment::new(cfg.clone())?.run_with(RunOptions {
            keep_paths: false,
            exec: Execution::Sequential,
        })?;
        Ok::<_, Error>(summarize(cfg, &records))
    })?;
    let mut w = Writer::new(out_dir)?;
    w.csv(
        "summary.csv",
        &SUMMARY_HEADER,
        summaries.iter().map(summary_row),
    )?;
    w.finish(None, sha256_hex(texts.as_bytes()))
}
