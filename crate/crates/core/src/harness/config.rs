//! Experiment configuration. Loaded from JSON; unknown keys are rejected and
//! missing ones take the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dpm::DpmConfig;
use crate::nn::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Method {
    /// Zero selected groups at once.
    #[serde(rename = "single")]
    Single,
    /// Smooth decay, release disabled.
    #[serde(rename = "sp")]
    Sp,
    /// Smooth decay with release.
    #[default]
    #[serde(rename = "sp_sr", alias = "sp-sr")]
    SpSr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Single, Method::Sp, Method::SpSr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Sp => "sp",
            Method::SpSr => "sp_sr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Method::Single),
            "sp" => Ok(Method::Sp),
            "sp-sr" | "sp_sr" => Ok(Method::SpSr),
            other => Err(format!("unknown method {other:?} (expected single, sp or sp-sr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        samples_per_class: usize,
        dims: usize,
        separation: f64,
    },
    Moons {
        samples_per_class: usize,
        noise: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Use only the first `limit` training samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Blobs { classes: 4, samples_per_class: 500, dims: 16, separation: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruningSpec {
    pub n_steps: usize,
    /// Ignored unless the method is `sp_sr`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rate: Option<f64>,
    pub t_len: f64,
    pub neutralize_penalization: bool,
    pub sparsity_target: f64,
    /// Optimizer steps between decisions; one epoch when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision_interval: Option<usize>,
    /// Step of the first decision; one interval when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_decision_step: Option<usize>,
    pub planned_decisions: usize,
    /// Derived from the target and `planned_decisions` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups_per_decision: Option<usize>,
    pub zero_epsilon: f64,
    /// Zero any group still decaying when training ends.
    pub finalize: bool,
}

impl PruningSpec {
    pub const DEFAULT_T_RATE: f64 = 0.3;
}

impl Default for PruningSpec {
    fn default() -> Self {
        PruningSpec {
            n_steps: 5,
            t_rate: None,
            t_len: 0.2,
            neutralize_penalization: false,
            sparsity_target: 0.5,
            decision_interval: None,
            first_decision_step: None,
            planned_decisions: 5,
            groups_per_decision: None,
            zero_epsilon: 1e-12,
            finalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    /// Epoch (1-based) at whose start the learning rate is multiplied by
    /// `lr_decay_factor`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_decay_epoch: Option<usize>,
    pub lr_decay_factor: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec { lr: 0.05, momentum: 0.0, l2: 0.0, lr_decay_epoch: None, lr_decay_factor: 0.1 }
    }
}

impl OptimizerSpec {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, momentum: self.momentum, l2: self.l2 }
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        match self.lr_decay_epoch {
            Some(e) if epoch >= e => self.lr * self.lr_decay_factor,
            _ => self.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Hidden layer widths; input and output widths come from the dataset.
    pub hidden: Vec<usize>,
    pub dataset: DatasetSpec,
    pub method: Method,
    pub pruning: PruningSpec,
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hidden: vec![64, 64],
            dataset: DatasetSpec::default(),
            method: Method::default(),
            pruning: PruningSpec::default(),
            optimizer: OptimizerSpec::default(),
            epochs: 20,
            batch_size: 32,
            seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Blobs, 4 classes in 16 dimensions, MLP 16-64-64-4.
    pub fn blobs_benchmark() -> Self {
        ExperimentConfig::default()
    }

    /// Two moons, MLP 2-32-32-2.
    pub fn moons_benchmark() -> Self {
        ExperimentConfig {
            hidden: vec![32, 32],
            dataset: DatasetSpec::Moons { samples_per_class: 500, noise: 0.2 },
            ..ExperimentConfig::default()
        }
    }

    /// MNIST from IDX files in `dir`, MLP 784-128-64-10.
    pub fn mnist_benchmark(dir: &Path) -> Self {
        ExperimentConfig {
            hidden: vec![128, 64],
            dataset: DatasetSpec::Idx {
                train_images: dir.join("train-images-idx3-ubyte"),
                train_labels: dir.join("train-labels-idx1-ubyte"),
                test_images: dir.join("t10k-images-idx3-ubyte"),
                test_labels: dir.join("t10k-labels-idx1-ubyte"),
                limit: None,
            },
            epochs: 5,
            batch_size: 64,
            ..ExperimentConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::io(path, source))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        // written so that NaN fails both
        let positive = |x: f64| x > 0.0;
        let nonnegative = |x: f64| x >= 0.0;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be nonempty and positive, got {:?}", self.hidden));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        match &self.dataset {
            DatasetSpec::Blobs { classes, samples_per_class, dims, separation } => {
                if *classes < 2 || *samples_per_class < 5 || *dims == 0 || !positive(*separation) {
                    return bad("blobs need >= 2 classes, >= 5 samples per class, dims >= 1 and separation > 0".into());
                }
            }
            DatasetSpec::Moons { samples_per_class, noise } => {
                if *samples_per_class < 5 || !nonnegative(*noise) {
                    return bad("moons need >= 5 samples per class and noise >= 0".into());
                }
            }
            DatasetSpec::Idx { .. } => {}
        }
        let o = &self.optimizer;
        if !positive(o.lr) || !(0.0..1.0).contains(&o.momentum) || !nonnegative(o.l2) || !positive(o.lr_decay_factor) {
            return bad("optimizer needs lr > 0, momentum in [0, 1), l2 >= 0, lr_decay_factor > 0".into());
        }
        let p = &self.pruning;
        if p.planned_decisions == 0 {
            return bad("planned_decisions must be at least 1".into());
        }
        if p.decision_interval == Some(0) || p.groups_per_decision == Some(0) {
            return bad("decision_interval and groups_per_decision must be at least 1".into());
        }
        if let Some(t) = p.t_rate {
            if !t.is_finite() {
                return bad("t_rate must be finite".into());
            }
        }
        // the remaining pruning checks depend on the network shape
        let groups: usize = self.hidden.iter().sum();
        let dpm = self.dpm_config(groups, 1);
        dpm.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if dpm.target_count(groups) + self.hidden.len() > groups {
            return bad(format!("sparsity_target {} would leave a hidden layer empty", p.sparsity_target));
        }
        Ok(())
    }

    /// Release threshold actually in force for the configured method.
    pub fn effective_t_rate(&self) -> f64 {
        match self.method {
            Method::SpSr => self.pruning.t_rate.unwrap_or(PruningSpec::DEFAULT_T_RATE),
            Method::Single | Method::Sp => DpmConfig::RELEASE_DISABLED,
        }
    }

    pub fn decision_interval(&self, steps_per_epoch: usize) -> usize {
        self.pruning.decision_interval.unwrap_or(steps_per_epoch.max(1))
    }

    pub fn first_decision_step(&self, steps_per_epoch: usize) -> usize {
        self.pruning.first_decision_step.unwrap_or_else(|| self.decision_interval(steps_per_epoch))
    }

    pub fn groups_per_decision(&self, total_groups: usize) -> usize {
        self.pruning.groups_per_decision.unwrap_or_else(|| {
            let wanted = total_groups as f64 * self.pruning.sparsity_target;
            ((wanted / self.pruning.planned_decisions as f64).ceil() as usize).max(1)
        })
    }

    pub fn dpm_config(&self, total_groups: usize, steps_per_epoch: usize) -> DpmConfig {
        let p = &self.pruning;
        DpmConfig {
            n_steps: p.n_steps,
            t_rate: self.effective_t_rate(),
            t_len: p.t_len,
            neutralize_penalization: p.neutralize_penalization,
            decision_interval: self.decision_interval(steps_per_epoch),
            sparsity_target: p.sparsity_target,
            groups_per_decision: self.groups_per_decision(total_groups),
            zero_epsilon: p.zero_epsilon,
        }
    }

    /// Copy with every derived default written out, for provenance.
    pub fn resolved(&self, total_groups: usize, steps_per_epoch: usize) -> ExperimentConfig {
        let mut out = self.clone();
        out.pruning.decision_interval = Some(self.decision_interval(steps_per_epoch));
        out.pruning.first_decision_step = Some(self.first_decision_step(steps_per_epoch));
        out.pruning.groups_per_decision = Some(self.groups_per_decision(total_groups));
        if self.method == Method::SpSr {
            out.pruning.t_rate = Some(self.effective_t_rate());
        }
        out
    }
}
