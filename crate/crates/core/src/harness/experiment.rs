//! One training run with pruning.
//!
//! Each optimizer step computes gradients on the current batch, runs the
//! decision phase if this step is a decision boundary, then applies the
//! pruner's tick. Decisions therefore see the same weights the gradients were
//! taken at, for every method.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, Method};
use super::data::{epoch_batches, gen_blobs, gen_moons, Dataset, Samples};
use super::idx::load_idx_splits;
use super::metrics::{accuracy, count_flops, count_params};
use super::record::{write_file, EpochRow, RunRecord, StepRow};
use super::HarnessError;
use crate::baseline::SingleStepPruner;
use crate::dpm::{DecayPruner, DecisionList, DpmConfig, DpmError, ReleaseEvent};
use crate::nn::{GradSnapshot, GroupIndex, Network, Sgd};
use crate::tensor::Rng;

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

pub fn load_dataset(spec: &DatasetSpec, rng: &mut Rng) -> Result<Dataset, HarnessError> {
    Ok(match spec {
        DatasetSpec::Blobs { classes, samples_per_class, dims, separation } => {
            gen_blobs(rng, *classes, *samples_per_class, *dims, *separation)
        }
        DatasetSpec::Moons { samples_per_class, noise } => gen_moons(rng, *samples_per_class, *noise),
        DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, limit } => {
            let mut ds = load_idx_splits(train_images, train_labels, test_images, test_labels)?;
            if let Some(limit) = limit {
                let mut kept = 0;
                let keep: Vec<usize> = (0..ds.labels.len())
                    .filter(|&i| {
                        let train = ds.split[i] == super::Split::Train;
                        kept += usize::from(train);
                        !train || kept <= *limit
                    })
                    .collect();
                ds = Dataset {
                    features: ds.features.select_rows(&keep),
                    labels: keep.iter().map(|&i| ds.labels[i]).collect(),
                    split: keep.iter().map(|&i| ds.split[i]).collect(),
                    num_classes: ds.num_classes,
                };
            }
            ds
        }
    })
}

/// The pruning strategy driving a run.
#[derive(Debug, Clone)]
pub enum Pruner {
    Single(SingleStepPruner),
    Decay(DecayPruner),
}

impl Pruner {
    pub fn new(method: Method, net: &Network, cfg: DpmConfig) -> Result<Self, DpmError> {
        Ok(match method {
            Method::Single => Pruner::Single(SingleStepPruner::new(net, cfg)?),
            Method::Sp | Method::SpSr => Pruner::Decay(DecayPruner::new(net, cfg)?),
        })
    }

    pub fn groups(&self) -> &[GroupIndex] {
        match self {
            Pruner::Single(p) => p.groups(),
            Pruner::Decay(p) => p.groups(),
        }
    }

    pub fn target_reached(&self) -> bool {
        match self {
            Pruner::Single(p) => p.target_reached(),
            Pruner::Decay(p) => p.target_reached(),
        }
    }

    pub fn decide(&mut self, net: &mut Network, step: u64) -> Result<DecisionList, DpmError> {
        match self {
            Pruner::Single(p) => p.single_step_prune(net, step),
            Pruner::Decay(p) => p.decide(net, step),
        }
    }

    pub fn tick(
        &mut self,
        net: &mut Network,
        grads: &GradSnapshot,
        sgd: &mut Sgd,
        step: u64,
    ) -> Result<Vec<ReleaseEvent>, DpmError> {
        match self {
            Pruner::Single(p) => p.tick(net, grads, sgd).map(|()| Vec::new()),
            Pruner::Decay(p) => p.tick(net, grads, sgd, step).map(|r| r.releases),
        }
    }

    /// Groups counted as pruned: decaying or zero.
    pub fn pruned_count(&self) -> usize {
        match self {
            Pruner::Single(p) => p.pruned_count(),
            Pruner::Decay(p) => p.pruned_count(),
        }
    }

    /// Groups at exact zero.
    pub fn zeroed_mask(&self) -> Vec<bool> {
        match self {
            Pruner::Single(p) => p.state().pruned.clone(),
            Pruner::Decay(p) => p.frozen_mask(),
        }
    }

    /// Zeroes every group still decaying; returns how many.
    pub fn finalize(&mut self, net: &mut Network) -> usize {
        match self {
            Pruner::Single(_) => 0,
            Pruner::Decay(p) => p.finalize(net).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub final_accuracy: f64,
    pub final_params_fraction: f64,
    pub final_flops_fraction: f64,
    pub total_releases: usize,
    pub final_group_sparsity: f64,
    pub final_zeroed_fraction: f64,
    /// Groups still decaying at the end of training and zeroed by finalization.
    pub finalized_groups: usize,
    pub steps_to_target: Option<u64>,
    pub steps_to_target_zeroed: Option<u64>,
    pub last_decision_step: Option<u64>,
    pub total_steps: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// The config with derived defaults filled in.
    pub config: ExperimentConfig,
    pub record: RunRecord,
    pub network: Network,
    pub groups: Vec<GroupIndex>,
    pub zeroed: Vec<bool>,
    pub test: Samples,
    pub summary: RunSummary,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a ExperimentConfig,
    summary: &'a RunSummary,
}

impl RunOutput {
    /// Writes config, timelines, release and decision logs, checkpoint and
    /// summary into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_file(&dir.join("config.json"), &self.config.to_json())?;
        self.record.write_to(dir)?;
        let path = dir.join("checkpoint.json");
        self.network.save_checkpoint(&path)?;
        let summary = SummaryFile { config: &self.config, summary: &self.summary };
        write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary serializes"))
    }
}

/// Trains and prunes one network; writes artifacts when `out_dir` is given.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset, &mut Rng::with_stream(cfg.seed, DATA_STREAM))?;
    let (train, test) = (dataset.train(), dataset.test());
    if train.is_empty() {
        return Err(HarnessError::Config("dataset has no training samples".into()));
    }
    let mut widths = vec![dataset.dims()];
    widths.extend(&cfg.hidden);
    widths.push(dataset.num_classes);
    let mut net = Network::mlp(&widths, &mut Rng::with_stream(cfg.seed, INIT_STREAM))?;
    let total_groups: usize = cfg.hidden.iter().sum();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let dpm_cfg = cfg.dpm_config(total_groups, steps_per_epoch);
    let first_decision = cfg.first_decision_step(steps_per_epoch) as u64;
    let interval = dpm_cfg.decision_interval as u64;
    let resolved = cfg.resolved(total_groups, steps_per_epoch);

    let mut pruner = Pruner::new(cfg.method, &net, dpm_cfg)?;
    let groups = pruner.groups().to_vec();
    let mut sgd = Sgd::new(cfg.optimizer.sgd(), net.num_params());
    let mut shuffle = Rng::with_stream(cfg.seed, SHUFFLE_STREAM);
    let dense_params = count_params(&net, &groups, &vec![false; total_groups]) as f64;
    let dense_flops = count_flops(&net, &groups, &vec![false; total_groups]) as f64;
    let epoch_row = |net: &Network, epoch: usize, zeroed: &[bool]| EpochRow {
        epoch,
        test_acc: accuracy(net, &test),
        params_fraction: count_params(net, &groups, zeroed) as f64 / dense_params,
        flops_fraction: count_flops(net, &groups, zeroed) as f64 / dense_flops,
    };

    let mut record = RunRecord::default();
    record.epochs.push(epoch_row(&net, 0, &pruner.zeroed_mask()));
    let mut finalized_groups = 0;
    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        sgd.set_lr(cfg.optimizer.lr_for_epoch(epoch));
        for batch in epoch_batches(&mut shuffle, train.len(), cfg.batch_size) {
            let b = train.select(&batch);
            let (loss, mut grads) = net.backward(&b.features, &b.labels)?;
            grads.batch_id = step;
            let boundary = step >= first_decision && (step - first_decision).is_multiple_of(interval);
            if boundary && !pruner.target_reached() {
                match pruner.decide(&mut net, step) {
                    Ok(d) => record.decisions.push(d),
                    Err(DpmError::NothingToPrune) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let releases = pruner.tick(&mut net, &grads, &mut sgd, step)?;
            let zeroed = pruner.zeroed_mask().iter().filter(|&&z| z).count();
            record.steps.push(StepRow {
                step,
                epoch,
                train_loss: loss,
                group_sparsity: pruner.pruned_count() as f64 / total_groups as f64,
                zeroed_fraction: zeroed as f64 / total_groups as f64,
                releases: releases.len(),
            });
            record.releases.extend(releases);
            step += 1;
        }
        if epoch == cfg.epochs && cfg.pruning.finalize {
            finalized_groups = pruner.finalize(&mut net);
        }
        record.epochs.push(epoch_row(&net, epoch, &pruner.zeroed_mask()));
    }

    let zeroed = pruner.zeroed_mask();
    let last = record.epochs.last().expect("initial row exists");
    let target = dpm_cfg.target_count(total_groups) as f64 / total_groups as f64;
    let summary = RunSummary {
        method: cfg.method,
        seed: cfg.seed,
        final_accuracy: last.test_acc,
        final_params_fraction: last.params_fraction,
        final_flops_fraction: last.flops_fraction,
        total_releases: record.total_releases(),
        final_group_sparsity: pruner.pruned_count() as f64 / total_groups as f64,
        final_zeroed_fraction: zeroed.iter().filter(|&&z| z).count() as f64 / total_groups as f64,
        finalized_groups,
        steps_to_target: record.first_step_reaching(target, false),
        steps_to_target_zeroed: record.first_step_reaching(target, true),
        last_decision_step: record.last_decision_step(),
        total_steps: step,
    };
    let out = RunOutput { config: resolved, record, network: net, groups, zeroed, test, summary };
    if let Some(dir) = out_dir {
        out.write_to(dir)?;
    }
    Ok(out)
}
