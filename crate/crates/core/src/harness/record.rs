//! Per-step and per-epoch timelines of a run and their CSV forms.

use std::path::Path;

use serde::Serialize;

use super::HarnessError;
use crate::dpm::{DecisionList, ReleaseEvent};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub step: u64,
    pub epoch: usize,
    pub train_loss: f64,
    /// Decaying plus zeroed groups over all groups.
    pub group_sparsity: f64,
    pub zeroed_fraction: f64,
    pub releases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub test_acc: f64,
    pub params_fraction: f64,
    pub flops_fraction: f64,
}

#[derive(Serialize)]
struct ReleaseRow {
    step: u64,
    group_id: usize,
    layer_id: usize,
    c_rate: f64,
    c_len: f64,
    n_step_at_release: usize,
}

#[derive(Serialize)]
struct DecisionRow {
    step: u64,
    group_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub steps: Vec<StepRow>,
    pub epochs: Vec<EpochRow>,
    pub releases: Vec<ReleaseEvent>,
    pub decisions: Vec<DecisionList>,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut any = false;
    for r in rows {
        w.serialize(r).expect("rows serialize");
        any = true;
    }
    if !any {
        w.write_record(header).expect("header writes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub const STEPS_HEADER: [&str; 6] = ["step", "epoch", "train_loss", "group_sparsity", "zeroed_fraction", "releases"];
pub const EPOCHS_HEADER: [&str; 4] = ["epoch", "test_acc", "params_fraction", "flops_fraction"];
pub const RELEASES_HEADER: [&str; 6] = ["step", "group_id", "layer_id", "c_rate", "c_len", "n_step_at_release"];

impl RunRecord {
    pub fn steps_csv(&self) -> String {
        to_csv(&self.steps, &STEPS_HEADER)
    }

    pub fn epochs_csv(&self) -> String {
        to_csv(&self.epochs, &EPOCHS_HEADER)
    }

    pub fn releases_csv(&self) -> String {
        let rows = self.releases.iter().map(|e| ReleaseRow {
            step: e.step,
            group_id: e.group_id,
            layer_id: e.layer_id,
            c_rate: e.c_rate,
            c_len: e.c_len,
            n_step_at_release: e.n_step_at_release,
        });
        to_csv(rows, &RELEASES_HEADER)
    }

    pub fn decisions_csv(&self) -> String {
        let rows = self
            .decisions
            .iter()
            .flat_map(|d| d.group_ids.iter().map(move |&g| DecisionRow { step: d.step, group_id: g }));
        to_csv(rows, &["step", "group_id"])
    }

    pub fn total_releases(&self) -> usize {
        self.releases.len()
    }

    /// First step whose group sparsity reaches `target`.
    pub fn first_step_reaching(&self, target: f64, zeroed_only: bool) -> Option<u64> {
        self.steps
            .iter()
            .find(|r| (if zeroed_only { r.zeroed_fraction } else { r.group_sparsity }) >= target - 1e-12)
            .map(|r| r.step)
    }

    pub fn last_decision_step(&self) -> Option<u64> {
        self.decisions.iter().filter(|d| !d.group_ids.is_empty()).map(|d| d.step).max()
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        write_file(&dir.join("steps.csv"), &self.steps_csv())?;
        write_file(&dir.join("epochs.csv"), &self.epochs_csv())?;
        write_file(&dir.join("releases.csv"), &self.releases_csv())?;
        write_file(&dir.join("decisions.csv"), &self.decisions_csv())
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
