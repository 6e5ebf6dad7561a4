//! Accuracy, parameter and FLOP counts of a (possibly pruned) network.

use crate::nn::{GroupIndex, Network};

use super::data::Samples;

/// Live (unpruned) channel count of every layer output, input first.
fn effective_widths(net: &Network, groups: &[GroupIndex], zeroed: &[bool]) -> Vec<usize> {
    let mut widths = net.widths();
    for g in groups.iter().filter(|g| zeroed[g.group_id]) {
        widths[g.layer_id + 1] -= 1;
    }
    widths
}

/// `2 * in * out` per dense layer, counting only live channels.
pub fn count_flops(net: &Network, groups: &[GroupIndex], zeroed: &[bool]) -> u64 {
    let w = effective_widths(net, groups, zeroed);
    w.windows(2).map(|p| 2 * p[0] as u64 * p[1] as u64).sum()
}

/// Weights and biases that remain after removing zeroed channels.
pub fn count_params(net: &Network, groups: &[GroupIndex], zeroed: &[bool]) -> u64 {
    let w = effective_widths(net, groups, zeroed);
    w.windows(2).map(|p| (p[0] as u64 + 1) * p[1] as u64).sum()
}

/// Groups whose every coordinate is within `eps` of zero.
pub fn scan_zeroed_groups(net: &Network, groups: &[GroupIndex], eps: f64) -> Vec<bool> {
    let p = net.params();
    groups.iter().map(|g| g.coords.iter().all(|&c| p[c].abs() <= eps)).collect()
}

pub fn accuracy(net: &Network, samples: &Samples) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let pred = net.predict(&samples.features).expect("dataset matches network");
    let hits = pred.iter().zip(&samples.labels).filter(|(p, y)| p == y).count();
    hits as f64 / samples.len() as f64
}
