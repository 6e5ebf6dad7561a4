//! `dpm` command line: `run`, `sweep` and `compare`.
//!
//! Settings resolve as flag, then config file, then built-in default. The
//! output directory falls back to `DPM_OUT_DIR`, then the config's
//! `output_dir`, then `./runs`. Progress goes to stderr; results are files.
//!
//! Exit codes: 0 success, 1 internal error, 2 invalid config or arguments,
//! 3 I/O failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::harness::{compare_methods, run_experiment, run_sweep, ExperimentConfig, HarnessError, Method, SweepAxis};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dpm", about = "Decay pruning experiments on small MLPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and prune one network.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long, env = "DPM_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Vary one hyperparameter and summarise each value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds; defaults to the config's seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "DPM_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Run single, sp and sp-sr on every seed.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "DPM_OUT_DIR")]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &HarnessError) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else if err.is_io() {
        EXIT_IO
    } else {
        EXIT_INTERNAL
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, HarnessError> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(HarnessError::Config(format!("--{what} is empty")));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|_| HarnessError::Config(format!("--{what}: cannot parse {s:?}"))))
        .collect()
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(config: &Path, seed: Option<u64>, method: Option<Method>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = method {
        if m != Method::SpSr && cfg.pruning.t_rate.is_some() {
            eprintln!("warning: --method {m} disables self-rectifying; ignoring t_rate from {}", config.display());
        }
        cfg.method = m;
    }
    let dir = out_dir(out, &cfg);
    eprintln!("run: method={} seed={} -> {}", cfg.method, cfg.seed, dir.display());
    let res = run_experiment(&cfg, Some(&dir))?;
    let s = &res.summary;
    eprintln!(
        "done: acc={:.4} flops={:.3} params={:.3} releases={}",
        s.final_accuracy, s.final_flops_fraction, s.final_params_fraction, s.total_releases
    );
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    axis: SweepAxis,
    values: &str,
    seeds: Option<&str>,
    jobs: usize,
    out: Option<PathBuf>,
) -> Result<(), HarnessError> {
    let cfg = load(config)?;
    let values: Vec<f64> = parse_list(values, "values")?;
    let seeds: Vec<u64> = match seeds {
        Some(s) => parse_list(s, "seeds")?,
        None => vec![cfg.seed],
    };
    let dir = out_dir(out, &cfg);
    eprintln!("sweep: {axis} over {values:?}, {} seed(s), {jobs} job(s) -> {}", seeds.len(), dir.display());
    let summary = run_sweep(&cfg, axis, &values, &seeds, jobs, Some(&dir))?;
    for f in &summary.failures {
        eprintln!("failed: {f}");
    }
    print!("{}", summary.to_csv());
    Ok(())
}

fn cmd_compare(config: &Path, seeds: &str, jobs: usize, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = load(config)?;
    let seeds: Vec<u64> = parse_list(seeds, "seeds")?;
    let dir = out_dir(out, &cfg);
    eprintln!("compare: {} methods x {} seeds, {jobs} job(s) -> {}", Method::ALL.len(), seeds.len(), dir.display());
    let cmp = compare_methods(&cfg, &seeds, jobs, Some(&dir))?;
    print!("{}", cmp.table());
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, method, out } => cmd_run(&config, seed, method, out),
        Command::Sweep { config, axis, values, seeds, jobs, out } => {
            cmd_sweep(&config, axis, &values, seeds.as_deref(), jobs, out)
        }
        Command::Compare { config, seeds, jobs, out } => cmd_compare(&config, &seeds, jobs, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
