//! Hyperparameter sweeps and method comparisons over several seeds.
//!
//! Runs may execute concurrently on a bounded pool; results are collected in
//! configuration order, so the written summaries do not depend on `jobs`.
//! The same seed list is used for every cell, making comparisons paired.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::experiment::{run_experiment, RunSummary};
use super::record::{write_file, StepRow};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "t_rate")]
    TRate,
    #[serde(rename = "t_len")]
    TLen,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "n" => Ok(SweepAxis::N),
            "t-rate" | "t_rate" => Ok(SweepAxis::TRate),
            "t-len" | "t_len" => Ok(SweepAxis::TLen),
            other => Err(format!("unknown sweep axis {other:?} (expected N, t-rate or t-len)")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::N => "N",
            SweepAxis::TRate => "t_rate",
            SweepAxis::TLen => "t_len",
        })
    }
}

impl SweepAxis {
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::N => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::Config(format!("N must be a positive integer, got {value}")));
                }
                cfg.pruning.n_steps = value as usize;
            }
            SweepAxis::TRate => cfg.pruning.t_rate = Some(value),
            SweepAxis::TLen => cfg.pruning.t_len = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool")
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn check_seeds(seeds: &[u64]) -> Result<(), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("seed list is empty".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Config(format!("duplicate seeds in {seeds:?}")));
    }
    Ok(())
}

/// Runs every config on the pool, each in `dir/<label>` when `out` is set.
fn run_cells(
    cells: &[(String, ExperimentConfig)],
    jobs: usize,
    out: Option<&Path>,
) -> Vec<Result<(RunSummary, Vec<StepRow>), String>> {
    pool(jobs).install(|| {
        cells
            .par_iter()
            .map(|(label, cfg)| {
                let dir: Option<PathBuf> = out.map(|d| d.join(label));
                run_experiment(cfg, dir.as_deref())
                    .map(|o| (o.summary, o.record.steps))
                    .map_err(|e| format!("{label}: {e}"))
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub final_accuracy: f64,
    pub final_flops_fraction: f64,
    pub final_params_fraction: f64,
    /// Mean over seeds of each run's release count.
    pub total_releases: f64,
    pub accuracy_std: f64,
    pub runs: usize,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub seeds: Vec<u64>,
    pub base_config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<String>,
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// One run per `(value, seed)`; rows follow the order of `values`. A failed
/// run is recorded and skipped.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    jobs: usize,
    out: Option<&Path>,
) -> Result<SweepSummary, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    check_seeds(seeds)?;
    base.validate()?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut cell_value = Vec::new();
    for (vi, &v) in values.iter().enumerate() {
        match axis.apply(base, v) {
            Ok(cfg) => {
                for &seed in seeds {
                    let label = format!("{axis}={v}/seed-{seed}");
                    cells.push((label, ExperimentConfig { seed, ..cfg.clone() }));
                    cell_value.push(vi);
                }
            }
            Err(e) => failures.push(format!("{axis}={v}: {e}")),
        }
    }
    let results = run_cells(&cells, jobs, out);

    let mut rows = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        let mut ok = Vec::new();
        let mut failed = 0;
        for (r, _) in results.iter().zip(&cell_value).filter(|(_, &c)| c == vi) {
            match r {
                Ok((s, _)) => ok.push(s),
                Err(msg) => {
                    failed += 1;
                    failures.push(msg.clone());
                }
            }
        }
        if cell_value.iter().all(|&c| c != vi) {
            failed = seeds.len();
        }
        let pick = |f: fn(&RunSummary) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<_>>();
        let (acc, acc_std) = mean_std(&pick(|s| s.final_accuracy));
        rows.push(SweepRow {
            value,
            final_accuracy: acc,
            final_flops_fraction: mean_std(&pick(|s| s.final_flops_fraction)).0,
            final_params_fraction: mean_std(&pick(|s| s.final_params_fraction)).0,
            total_releases: mean_std(&pick(|s| s.total_releases as f64)).0,
            accuracy_std: acc_std,
            runs: ok.len(),
            failed_runs: failed,
        });
    }
    let summary = SweepSummary { axis, seeds: seeds.to_vec(), base_config: base.clone(), rows, failures };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_file(&dir.join("summary.csv"), &summary.to_csv())?;
        write_file(&dir.join("summary.json"), &summary.to_json())?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStats {
    pub method: Method,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub flops_fraction_mean: f64,
    pub params_fraction_mean: f64,
    /// `None` when some run never reached the target.
    pub steps_to_target_mean: Option<f64>,
    pub steps_to_target_zeroed_mean: Option<f64>,
    pub releases_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub base_config: ExperimentConfig,
    pub stats: Vec<MethodStats>,
    pub runs: Vec<RunSummary>,
    /// Per-step timeline of every run, in `runs` order.
    #[serde(skip)]
    pub timelines: Vec<Vec<StepRow>>,
}

impl Comparison {
    pub fn stats_for(&self, method: Method) -> Option<&MethodStats> {
        self.stats.iter().find(|s| s.method == method)
    }

    pub fn runs_for(&self, method: Method) -> impl Iterator<Item = (&RunSummary, &Vec<StepRow>)> {
        self.runs.iter().zip(&self.timelines).filter(move |(r, _)| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.stats {
            w.serialize(s).expect("rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }

    /// One row per method with `mean ± std` accuracy, for terminal output.
    pub fn table(&self) -> String {
        let mut out = String::from("method   acc(mean±std)       flops   params  releases\n");
        for s in &self.stats {
            out.push_str(&format!(
                "{:<8} {:>7.3}% ± {:<7.3}  {:>6.3}  {:>6.3}  {:>8.1}\n",
                s.method.name(),
                100.0 * s.accuracy_mean,
                100.0 * s.accuracy_std,
                s.flops_fraction_mean,
                s.params_fraction_mean,
                s.releases_mean
            ));
        }
        out
    }
}

/// Runs every method on every seed and summarises per method.
pub fn compare_methods(
    base: &ExperimentConfig,
    seeds: &[u64],
    jobs: usize,
    out: Option<&Path>,
) -> Result<Comparison, HarnessError> {
    if seeds.len() < 2 {
        return Err(HarnessError::Config("comparison needs at least two seeds".into()));
    }
    check_seeds(seeds)?;
    let mut cells = Vec::new();
    for method in Method::ALL {
        for &seed in seeds {
            let cfg = ExperimentConfig { method, seed, ..base.clone() };
            cfg.validate()?;
            cells.push((format!("{method}/seed-{seed}"), cfg));
        }
    }
    let results = run_cells(&cells, jobs, out);
    let mut runs = Vec::new();
    let mut timelines = Vec::new();
    for r in results {
        let (s, t) = r.map_err(HarnessError::Config)?;
        runs.push(s);
        timelines.push(t);
    }

    let stats = Method::ALL
        .iter()
        .map(|&method| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.method == method).collect();
            let pick = |f: &dyn Fn(&RunSummary) -> f64| mine.iter().map(|s| f(s)).collect::<Vec<_>>();
            let step_mean = |f: &dyn Fn(&RunSummary) -> Option<u64>| {
                let reached: Option<Vec<f64>> = mine.iter().map(|s| f(s).map(|v| v as f64)).collect();
                reached.map(|v| mean_std(&v).0)
            };
            let (acc, acc_std) = mean_std(&pick(&|s| s.final_accuracy));
            MethodStats {
                method,
                runs: mine.len(),
                accuracy_mean: acc,
                accuracy_std: acc_std,
                flops_fraction_mean: mean_std(&pick(&|s| s.final_flops_fraction)).0,
                params_fraction_mean: mean_std(&pick(&|s| s.final_params_fraction)).0,
                steps_to_target_mean: step_mean(&|s| s.steps_to_target),
                steps_to_target_zeroed_mean: step_mean(&|s| s.steps_to_target_zeroed),
                releases_mean: mean_std(&pick(&|s| s.total_releases as f64)).0,
            }
        })
        .collect();

    let cmp = Comparison { seeds: seeds.to_vec(), base_config: base.clone(), stats, runs, timelines };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_file(&dir.join("comparison.csv"), &cmp.to_csv())?;
        write_file(&dir.join("comparison.json"), &serde_json::to_string_pretty(&cmp).expect("serializes"))?;
        let tl = dir.join("timelines");
        std::fs::create_dir_all(&tl).map_err(|e| HarnessError::io(&tl, e))?;
        for (run, steps) in cmp.runs.iter().zip(&cmp.timelines) {
            let mut w = csv::Writer::from_writer(Vec::new());
            for s in steps {
                w.serialize(s).expect("rows serialize");
            }
            let text = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
            write_file(&tl.join(format!("{}_seed-{}.csv", run.method, run.seed)), &text)?;
        }
    }
    Ok(cmp)
}
