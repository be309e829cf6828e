use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbf_ilc::config::{parse_raw, Preset};
use sbf_ilc::par::Execution;
use sbf_ilc::report::{run_command, run_table, RunCommand, RunManifest};
use sbf_ilc::{Error, ErrorCategory};

/// Sparse basis-function ILC experiments on a simulated feedback loop.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV artifacts and manifest.
    Run {
        /// TOML experiment config.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Use a shipped preset instead of a config file.
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cardinality sweep, e.g. `n_theta=1..12` or `n_theta=2,4,8` (sbf only).
        #[arg(long, value_parser = parse_sweep)]
        sweep: Option<Sweep>,
        /// Also write every LARS breakpoint to lars_path.csv.
        #[arg(long)]
        dump_path: bool,
        /// Also write per-trial update wall time to timing.csv.
        #[arg(long)]
        timing: bool,
        /// Run sweeps without the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Run all four presets and write their loss factors to one summary.csv.
    Table {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequential: bool,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone)]
struct Sweep(Vec<usize>);

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let list = s
        .strip_prefix("n_theta=")
        .ok_or_else(|| format!("expected `n_theta=<range>`, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let ks: Vec<usize> = match list.split_once("..") {
        Some((a, b)) => (num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?).collect(),
        None => list.split(',').map(num).collect::<Result<_, _>>()?,
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(format!("sweep `{s}` must list cardinalities of at least 1"));
    }
    Ok(Sweep(ks))
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn execute(cmd: Command) -> Result<RunManifest, Error> {
    match cmd {
        Command::Run {
            config,
            preset,
            out,
            seed,
            sweep,
            dump_path,
            timing,
            sequential,
        } => {
            let opts = RunCommand {
                seed,
                sweep: sweep.map(|s| s.0),
                dump_path,
                timing,
                exec: exec(sequential),
            };
            match (config, preset) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    run_command(parse_raw(&text)?, Some(&path), &out, &opts)
                }
                (None, Some(p)) => run_command(p.raw(), None, &out, &opts),
                (None, None) => unreachable!("clap requires a config or a preset"),
            }
        }
        Command::Table {
            out,
            seed,
            sequential,
        } => run_table(seed, &out, exec(sequential)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(m) => {
            for a in &m.artifacts {
                println!("{}  {}", a.sha256, a.file);
            }
            println!("wrote {} files to {}", m.artifacts.len() + 1, m.output_dir);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Validation => 3,
                ErrorCategory::Solver => 4,
                ErrorCategory::Io => 5,
            })
        }
    }
}
