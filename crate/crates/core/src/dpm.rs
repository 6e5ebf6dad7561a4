//! Decay pruning: selected channel groups are shrunk to zero over `N`
//! optimizer steps by projecting each tentative update onto a linearly
//! decreasing norm schedule, and are released back to normal training when
//! their gradients keep pushing the norm outward.
//!
//! Per-group state is a [`DecayState`]. Selection happens in
//! [`decide_prune`]; every optimizer step goes through [`DecayPruner::tick`],
//! which pre-updates all parameters, runs [`decay_step`] on each decaying
//! group and writes the result back.

use thiserror::Error;

use crate::nn::{group_view, GradSnapshot, GroupIndex, Network, NnError, Sgd};
use crate::tensor::{l2_norm, scale_to_norm, TensorError, Vec64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpmError {
    #[error("no eligible group can be pruned without emptying a layer")]
    NothingToPrune,
    #[error("update step is zero; no gradient information")]
    ZeroStep,
    #[error("peer gradient norms average to zero")]
    ZeroPeers,
    #[error("invalid pruning config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Decay bookkeeping for one group. `n_step` counts completed decay steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecayState {
    pub n_step: usize,
    pub l_init: f64,
    pub is_decay: bool,
}

impl DecayState {
    /// Fully decayed: zero and never updated again.
    pub fn is_frozen(&self, n: usize) -> bool {
        self.is_decay && self.n_step >= n
    }

    /// Decaying but not yet at zero.
    pub fn is_active(&self, n: usize) -> bool {
        self.is_decay && self.n_step < n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpmConfig {
    /// Number of decay steps `N`.
    pub n_steps: usize,
    pub t_rate: f64,
    pub t_len: f64,
    pub neutralize_penalization: bool,
    pub decision_interval: usize,
    pub sparsity_target: f64,
    pub groups_per_decision: usize,
    pub zero_epsilon: f64,
}

impl Default for DpmConfig {
    fn default() -> Self {
        DpmConfig {
            n_steps: 5,
            t_rate: 0.3,
            t_len: 0.2,
            neutralize_penalization: false,
            decision_interval: 1,
            sparsity_target: 0.5,
            groups_per_decision: 1,
            zero_epsilon: 1e-12,
        }
    }
}

impl DpmConfig {
    /// Release threshold that no escaping rate can exceed; disables
    /// self-rectifying.
    pub const RELEASE_DISABLED: f64 = f64::INFINITY;

    pub fn validate(&self) -> Result<(), DpmError> {
        let bad = |m: &str| Err(DpmError::InvalidConfig(m.to_string()));
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if self.t_rate.is_nan() || self.t_len.is_nan() || self.t_len < 0.0 {
            return bad("t_len must be nonnegative and thresholds must be numbers");
        }
        if self.decision_interval == 0 || self.groups_per_decision == 0 {
            return bad("decision_interval and groups_per_decision must be at least 1");
        }
        if !(0.0..1.0).contains(&self.sparsity_target) {
            return bad("sparsity_target must lie in [0, 1)");
        }
        if self.zero_epsilon.is_nan() || self.zero_epsilon < 0.0 {
            return bad("zero_epsilon must be nonnegative");
        }
        Ok(())
    }

    /// Number of groups that must be pruned to reach the target.
    pub fn target_count(&self, total_groups: usize) -> usize {
        (self.sparsity_target * total_groups as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseEvent {
    pub step: u64,
    pub group_id: usize,
    pub layer_id: usize,
    pub c_rate: f64,
    pub c_len: f64,
    pub n_step_at_release: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionList {
    pub step: u64,
    pub group_ids: Vec<usize>,
}

pub fn compute_ls(l_init: f64, n: usize) -> f64 {
    l_init / n as f64
}

/// Norm the group must have after decay step `n_step` (1-based).
pub fn compute_l_target(l_init: f64, n: usize, n_step: usize) -> f64 {
    debug_assert!((1..=n).contains(&n_step));
    (n - n_step) as f64 * compute_ls(l_init, n)
}

/// Actual escaping rate: norm growth of the tentative update over its length.
pub fn compute_c_rate(x_k: &[f64], x_tilde: &[f64], zero_epsilon: f64) -> Result<f64, DpmError> {
    let step: Vec<f64> = x_tilde.iter().zip(x_k).map(|(a, b)| a - b).collect();
    let step_len = l2_norm(&step);
    if step_len <= zero_epsilon {
        return Err(DpmError::ZeroStep);
    }
    // bounded by the triangle inequality; the clamp absorbs rounding
    Ok(((l2_norm(x_tilde) - l2_norm(x_k)) / step_len).clamp(-1.0, 1.0))
}

/// Gradient norm relative to the mean gradient norm of all channels in the
/// same layer (the group itself included).
pub fn compute_c_len(grad: &[f64], peer_grad_norms: &[f64]) -> Result<f64, DpmError> {
    if peer_grad_norms.is_empty() {
        return Err(DpmError::ZeroPeers);
    }
    let mean = peer_grad_norms.iter().sum::<f64>() / peer_grad_norms.len() as f64;
    if mean <= 0.0 {
        return Err(DpmError::ZeroPeers);
    }
    Ok(l2_norm(grad) / mean)
}

pub fn should_release(c_rate: f64, c_len: f64, cfg: &DpmConfig) -> bool {
    c_rate > cfg.t_rate && c_len > cfg.t_len
}

/// After an undershoot at decay step `current_n_step`, returns the step whose
/// target the next call should use: the latest schedule point whose norm does
/// not exceed `x_tilde_norm`, and at least one step further on.
pub fn recalibrate_n_step(x_tilde_norm: f64, l_init: f64, n: usize, current_n_step: usize) -> usize {
    let ls = compute_ls(l_init, n);
    let lower = (current_n_step + 1).min(n);
    if ls <= 0.0 {
        return n;
    }
    let ratio = (x_tilde_norm / ls).floor();
    let candidate = if ratio >= n as f64 { 0 } else { n - ratio as usize };
    candidate.clamp(lower, n)
}

/// Which branch a decay step took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayBranch {
    /// Already at zero; stays zero.
    Frozen,
    Released,
    /// Scaled onto the schedule.
    Projected,
    /// Tentative update was already below target; kept as is.
    Undershoot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub c_rate: f64,
    pub c_len: f64,
    pub n_step_at_release: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayOutcome {
    pub weights: Vec64,
    /// `weights == x_tilde * scale`.
    pub scale: f64,
    pub state: DecayState,
    pub branch: DecayBranch,
    pub release: Option<Release>,
}

/// Tentative update and gradient of one group for one optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct GroupStep<'a> {
    pub x_k: &'a [f64],
    pub x_tilde: &'a [f64],
    /// Tentative update with the L2 penalty removed; only read when
    /// penalization is neutralized.
    pub x_tilde_penalty_free: &'a [f64],
    pub grad: &'a [f64],
    /// Gradient norms of every channel group in the same layer.
    pub peer_grad_norms: &'a [f64],
}

impl<'a> GroupStep<'a> {
    pub fn plain(x_k: &'a [f64], x_tilde: &'a [f64], grad: &'a [f64], peer_grad_norms: &'a [f64]) -> Self {
        GroupStep { x_k, x_tilde, x_tilde_penalty_free: x_tilde, grad, peer_grad_norms }
    }
}

/// One decay step for one decaying group.
pub fn decay_step(input: GroupStep<'_>, state: DecayState, cfg: &DpmConfig) -> DecayOutcome {
    debug_assert!(state.is_decay, "decay_step on a group that is not decaying");
    let n = cfg.n_steps;
    let x_tilde = Vec64::new(input.x_tilde.to_vec()).expect("finite tentative update");
    let zero = |state| DecayOutcome {
        weights: Vec64::zeros(x_tilde.len()),
        scale: 0.0,
        state,
        branch: DecayBranch::Frozen,
        release: None,
    };
    if state.n_step >= n {
        return zero(DecayState { n_step: n, ..state });
    }

    let rate_target = if cfg.neutralize_penalization { input.x_tilde_penalty_free } else { input.x_tilde };
    let criteria = compute_c_rate(input.x_k, rate_target, cfg.zero_epsilon)
        .and_then(|c_rate| Ok((c_rate, compute_c_len(input.grad, input.peer_grad_norms)?)));
    if let Ok((c_rate, c_len)) = criteria {
        if should_release(c_rate, c_len, cfg) {
            return DecayOutcome {
                weights: x_tilde,
                scale: 1.0,
                state: DecayState { n_step: 0, l_init: state.l_init, is_decay: false },
                branch: DecayBranch::Released,
                release: Some(Release { c_rate, c_len, n_step_at_release: state.n_step }),
            };
        }
    }

    let executing = state.n_step + 1;
    let target = compute_l_target(state.l_init, n, executing);
    let norm = x_tilde.norm();
    if norm <= target {
        // the final step only undershoots when the update is already zero
        let completed = if executing == n { n } else { recalibrate_n_step(norm, state.l_init, n, executing) - 1 };
        return DecayOutcome {
            weights: x_tilde,
            scale: 1.0,
            state: DecayState { n_step: completed, ..state },
            branch: DecayBranch::Undershoot,
            release: None,
        };
    }
    match scale_to_norm(&x_tilde, target) {
        Ok(weights) => DecayOutcome {
            weights,
            scale: target / norm,
            state: DecayState { n_step: executing, ..state },
            branch: DecayBranch::Projected,
            release: None,
        },
        // unreachable in practice: a zero vector always takes the undershoot branch
        Err(TensorError::ZeroVectorScale { .. }) | Err(_) => zero(DecayState { n_step: n, ..state }),
    }
}

/// Groups that can be selected: not decaying, not frozen, not already zero.
/// `busy[i]` marks groups excluded by the caller's own bookkeeping.
pub fn select_groups(
    net: &Network,
    groups: &[GroupIndex],
    busy: &[bool],
    budget: usize,
    zero_epsilon: f64,
) -> Result<Vec<usize>, DpmError> {
    if budget == 0 {
        return Ok(Vec::new());
    }
    let num_layers = groups.iter().map(|g| g.layer_id + 1).max().unwrap_or(0);
    let norms: Vec<f64> = groups.iter().map(|g| net.group_norm(g)).collect();
    let eligible: Vec<bool> = (0..groups.len()).map(|i| !busy[i] && norms[i] > zero_epsilon).collect();
    let mut survivors = vec![0usize; num_layers];
    for g in groups.iter().filter(|g| eligible[g.group_id]) {
        survivors[g.layer_id] += 1;
    }

    let mut candidates: Vec<usize> = (0..groups.len()).filter(|&i| eligible[i]).collect();
    candidates.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));

    let mut picked = Vec::new();
    for i in candidates {
        if picked.len() == budget {
            break;
        }
        let layer = groups[i].layer_id;
        // keep at least one live channel per layer
        if survivors[layer] > 1 {
            survivors[layer] -= 1;
            picked.push(i);
        }
    }
    if picked.is_empty() {
        return Err(DpmError::NothingToPrune);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Selects the groups to start decaying at this decision point.
pub fn decide_prune(
    net: &Network,
    groups: &[GroupIndex],
    states: &[DecayState],
    cfg: &DpmConfig,
    step: u64,
) -> Result<DecisionList, DpmError> {
    let busy: Vec<bool> = states.iter().map(|s| s.is_decay).collect();
    let pruned = busy.iter().filter(|&&b| b).count();
    let budget = cfg.groups_per_decision.min(cfg.target_count(groups.len()).saturating_sub(pruned));
    let group_ids = select_groups(net, groups, &busy, budget, cfg.zero_epsilon)?;
    Ok(DecisionList { step, group_ids })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub releases: Vec<ReleaseEvent>,
    /// Groups that reached zero during this tick.
    pub newly_frozen: Vec<usize>,
}

/// Owns the group view and per-group decay state of one network.
#[derive(Debug, Clone)]
pub struct DecayPruner {
    groups: Vec<GroupIndex>,
    states: Vec<DecayState>,
    layer_members: Vec<Vec<usize>>,
    cfg: DpmConfig,
}

impl DecayPruner {
    pub fn new(net: &Network, cfg: DpmConfig) -> Result<Self, DpmError> {
        cfg.validate()?;
        let groups = group_view(net);
        let num_layers = groups.iter().map(|g| g.layer_id + 1).max().unwrap_or(0);
        if cfg.target_count(groups.len()) + num_layers > groups.len() {
            return Err(DpmError::InvalidConfig("sparsity_target would empty a layer".into()));
        }
        let mut layer_members = vec![Vec::new(); num_layers];
        for g in &groups {
            layer_members[g.layer_id].push(g.group_id);
        }
        let states = vec![DecayState::default(); groups.len()];
        Ok(DecayPruner { groups, states, layer_members, cfg })
    }

    pub fn config(&self) -> &DpmConfig {
        &self.cfg
    }

    pub fn groups(&self) -> &[GroupIndex] {
        &self.groups
    }

    pub fn states(&self) -> &[DecayState] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [DecayState] {
        &mut self.states
    }

    /// Decaying or frozen groups.
    pub fn pruned_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_decay).count()
    }

    pub fn frozen_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_frozen(self.cfg.n_steps)).count()
    }

    pub fn frozen_mask(&self) -> Vec<bool> {
        self.states.iter().map(|s| s.is_frozen(self.cfg.n_steps)).collect()
    }

    pub fn target_reached(&self) -> bool {
        self.pruned_count() >= self.cfg.target_count(self.groups.len())
    }

    /// Decision phase: picks groups and starts their decay, recording the
    /// current norm as the initial length.
    pub fn decide(&mut self, net: &Network, step: u64) -> Result<DecisionList, DpmError> {
        let decision = decide_prune(net, &self.groups, &self.states, &self.cfg, step)?;
        for &i in &decision.group_ids {
            if !self.states[i].is_decay {
                self.states[i] = DecayState { n_step: 0, l_init: net.group_norm(&self.groups[i]), is_decay: true };
            }
        }
        Ok(decision)
    }

    /// Immediately zeroes every group that is still decaying.
    pub fn finalize(&mut self, net: &mut Network) -> Vec<usize> {
        let n = self.cfg.n_steps;
        let mut done = Vec::new();
        for (i, s) in self.states.iter_mut().enumerate() {
            if s.is_active(n) {
                s.n_step = n;
                for &c in &self.groups[i].coords {
                    net.params_mut()[c] = 0.0;
                }
                done.push(i);
            }
        }
        done
    }

    /// One optimizer step with decay applied.
    ///
    /// Every decision is made from the same pre-update snapshot. Each group's
    /// result is a rescaling of its tentative update, so the scale factors are
    /// multiplied coordinate-wise; where groups of adjacent layers share a
    /// weight the product applies both, independent of order.
    pub fn tick(
        &mut self,
        net: &mut Network,
        grads: &GradSnapshot,
        sgd: &mut Sgd,
        step: u64,
    ) -> Result<TickReport, DpmError> {
        let n = self.cfg.n_steps;
        let params = net.params().to_vec();
        if grads.values.len() != params.len() {
            return Err(NnError::ShapeMismatch("gradient does not match network".into()).into());
        }
        let frozen = coord_mask(&self.groups, params.len(), |i| self.states[i].is_frozen(n));
        let pre = sgd.pre_update(&params, &grads.values, &frozen);

        let grad_norms: Vec<f64> = self.groups.iter().map(|g| l2_norm(&gather(&grads.values, &g.coords))).collect();

        let mut factor = vec![1.0; params.len()];
        let mut report = TickReport::default();
        for i in 0..self.groups.len() {
            let state = self.states[i];
            if !state.is_active(n) {
                continue;
            }
            let g = &self.groups[i];
            let x_k = gather(&params, &g.coords);
            let x_tilde = gather(&pre.tilde, &g.coords);
            let x_free = gather(&pre.penalty_free, &g.coords);
            let grad = gather(&grads.values, &g.coords);
            let peers: Vec<f64> = self.layer_members[g.layer_id].iter().map(|&j| grad_norms[j]).collect();
            let input = GroupStep {
                x_k: &x_k,
                x_tilde: &x_tilde,
                x_tilde_penalty_free: &x_free,
                grad: &grad,
                peer_grad_norms: &peers,
            };
            let out = decay_step(input, state, &self.cfg);
            for &c in &g.coords {
                factor[c] *= out.scale;
            }
            if let Some(r) = out.release {
                report.releases.push(ReleaseEvent {
                    step,
                    group_id: i,
                    layer_id: g.layer_id,
                    c_rate: r.c_rate,
                    c_len: r.c_len,
                    n_step_at_release: r.n_step_at_release,
                });
            }
            if out.state.is_frozen(n) {
                report.newly_frozen.push(i);
            }
            self.states[i] = out.state;
        }

        // Projected groups were scaled by the factor; frozen ones get exact zeros.
        let frozen_after = coord_mask(&self.groups, params.len(), |i| self.states[i].is_frozen(n));
        let updated: Vec<f64> = pre
            .tilde
            .iter()
            .zip(&factor)
            .zip(&frozen_after)
            .map(|((&t, &f), &z)| {
                if z {
                    0.0
                } else if f == 1.0 {
                    t
                } else {
                    t * f
                }
            })
            .collect();
        net.set_params(updated)?;
        Ok(report)
    }
}

pub(crate) fn gather(values: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&c| values[c]).collect()
}

/// Coordinate mask covering every group selected by `pick`.
pub(crate) fn coord_mask(groups: &[GroupIndex], len: usize, pick: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut mask = vec![false; len];
    for g in groups.iter().filter(|g| pick(g.group_id)) {
        for &c in &g.coords {
            mask[c] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, t_rate: f64, t_len: f64) -> DpmConfig {
        DpmConfig { n_steps: n, t_rate, t_len, ..DpmConfig::default() }
    }

    #[test]
    fn ls_and_target_examples() {
        assert_eq!(compute_ls(10.0, 5), 2.0);
        assert_eq!(compute_ls(0.0, 5), 0.0);
        assert_eq!(compute_ls(7.0, 3), 7.0 / 3.0);
        assert_eq!(compute_l_target(10.0, 5, 1), 8.0);
        assert_eq!(compute_l_target(10.0, 5, 5), 0.0);
        assert_eq!(compute_l_target(9.0, 3, 2), 3.0);
    }

    #[test]
    fn c_rate_examples() {
        let eps = 1e-12;
        assert!((compute_c_rate(&[3.0, 4.0], &[3.6, 4.8], eps).unwrap() - 1.0).abs() < 1e-12);
        assert!((compute_c_rate(&[3.0, 4.0], &[1.5, 2.0], eps).unwrap() + 1.0).abs() < 1e-12);
        // (sqrt(1.01) - 1) / 0.1
        let expected = (1.01f64.sqrt() - 1.0) / 0.1;
        assert!((compute_c_rate(&[1.0, 0.0], &[1.0, 0.1], eps).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.0499).abs() < 1e-4);
        assert_eq!(compute_c_rate(&[1.0, 2.0], &[1.0, 2.0], eps), Err(DpmError::ZeroStep));
    }

    #[test]
    fn c_len_examples() {
        assert_eq!(compute_c_len(&[3.0, 4.0], &[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(compute_c_len(&[2.0], &[1.0, 1.0, 2.0, 4.0]).unwrap(), 1.0);
        assert_eq!(compute_c_len(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(compute_c_len(&[1.0], &[0.0, 0.0]), Err(DpmError::ZeroPeers));
    }

    #[test]
    fn release_condition_is_strict() {
        let c = cfg(5, 0.3, 0.2);
        assert!(should_release(0.5, 0.5, &c));
        assert!(!should_release(0.5, 0.1, &c));
        assert!(!should_release(0.3, 0.5, &c));
        assert!(!should_release(0.9, 0.2, &c));
    }

    #[test]
    fn recalibration_examples() {
        // L_s = 2: 5 - floor(3.5 / 2) = 4, and the next target (5 - 4) * 2 = 2 <= 3.5
        assert_eq!(recalibrate_n_step(3.5, 10.0, 5, 1), 4);
        assert_eq!(recalibrate_n_step(0.0, 10.0, 5, 1), 5);
        // floor(7.9 / 2) = 3 gives 2, clamped to at least current + 1
        assert_eq!(recalibrate_n_step(7.9, 10.0, 5, 1), 2);
        assert_eq!(recalibrate_n_step(1.0, 10.0, 5, 5), 5);
    }

    #[test]
    fn zero_gradient_schedule() {
        let c = cfg(5, 0.3, 0.2);
        let mut x = vec![6.0, 8.0];
        let mut state = DecayState { n_step: 0, l_init: 10.0, is_decay: true };
        let grad = [0.0, 0.0];
        let peers = [0.0, 0.0];
        for expected in [8.0, 6.0, 4.0, 2.0, 0.0] {
            let out = decay_step(GroupStep::plain(&x, &x.clone(), &grad, &peers), state, &c);
            assert!((out.weights.norm() - expected).abs() < 1e-12);
            state = out.state;
            x = out.weights.into_inner();
        }
        assert!(state.is_frozen(5));
        let out = decay_step(GroupStep::plain(&[1.0, 1.0], &[2.0, 2.0], &grad, &peers), state, &c);
        assert_eq!(out.branch, DecayBranch::Frozen);
        assert!(out.weights.is_zero());
    }

    #[test]
    fn radial_outward_gradient_releases() {
        // g = -c * x gives x_tilde = (1 + lr * c) x: C_rate = 1.
        let c = cfg(5, 0.3, 0.2);
        let x = [3.0, 4.0];
        let (lr, k) = (0.1, 2.0);
        let grad = [-k * 3.0, -k * 4.0];
        let x_tilde = sgd_tilde(&x, &grad, lr);
        // own gradient norm is 10; peers chosen so the mean is 10 / 1.5
        let peers = [10.0, 10.0 / 3.0, 20.0 / 3.0];
        let state = DecayState { n_step: 2, l_init: 9.0, is_decay: true };
        let out = decay_step(GroupStep::plain(&x, &x_tilde, &grad, &peers), state, &c);
        assert_eq!(out.branch, DecayBranch::Released);
        assert_eq!(out.weights.as_slice(), x_tilde.as_slice());
        assert_eq!(out.state, DecayState { n_step: 0, l_init: 9.0, is_decay: false });
        let r = out.release.unwrap();
        assert!((r.c_rate - 1.0).abs() < 1e-12);
        assert!((r.c_len - 1.5).abs() < 1e-12);
        assert_eq!(r.n_step_at_release, 2);
    }

    fn sgd_tilde(x: &[f64], g: &[f64], lr: f64) -> Vec<f64> {
        x.iter().zip(g).map(|(a, b)| a - lr * b).collect()
    }

    #[test]
    fn undershoot_keeps_tentative_update() {
        let c = cfg(5, 2.0, 0.2);
        let x = [6.0, 8.0];
        let x_tilde = [2.1, 2.8]; // norm 3.5 < target 8
        let grad = [39.0, 52.0];
        let out = decay_step(
            GroupStep::plain(&x, &x_tilde, &grad, &[1.0]),
            DecayState { n_step: 0, l_init: 10.0, is_decay: true },
            &c,
        );
        assert_eq!(out.branch, DecayBranch::Undershoot);
        assert_eq!(out.weights.as_slice(), &x_tilde);
        // executing step 1 recalibrates to step 4 next, i.e. 3 completed
        assert_eq!(out.state.n_step, 3);
        let next_target = compute_l_target(10.0, 5, out.state.n_step + 1);
        assert!(next_target <= 3.5);
    }

    #[test]
    fn neutralized_penalty_can_release() {
        // With the L2 term the update points inward; without it, outward.
        let x = [3.0, 4.0];
        let grad = [-0.3, -0.4];
        let (lr, l2) = (1.0, 0.2);
        let x_tilde: Vec<f64> = x.iter().zip(&grad).map(|(w, g)| w - lr * (g + l2 * w)).collect();
        let x_free = sgd_tilde(&x, &grad, lr);
        let state = DecayState { n_step: 0, l_init: 5.0, is_decay: true };
        let input = GroupStep {
            x_k: &x,
            x_tilde: &x_tilde,
            x_tilde_penalty_free: &x_free,
            grad: &grad,
            peer_grad_norms: &[0.1],
        };
        let plain = decay_step(input, state, &cfg(5, 0.3, 0.2));
        assert_ne!(plain.branch, DecayBranch::Released);
        let neutral = decay_step(input, state, &DpmConfig { neutralize_penalization: true, ..cfg(5, 0.3, 0.2) });
        assert_eq!(neutral.branch, DecayBranch::Released);
        // the applied update keeps the penalty
        assert_eq!(neutral.weights.as_slice(), x_tilde.as_slice());
    }

    fn one_layer_net(norms: &[f64]) -> Network {
        use crate::nn::{Activation, LayerSpec};
        use crate::tensor::Matrix;
        let h = norms.len();
        // each hidden row is (norm, 0); bias 0; output column 0
        let mut w0 = Matrix::zeros(h, 2);
        for (i, &n) in norms.iter().enumerate() {
            w0.row_mut(i)[0] = n;
        }
        Network::from_layers(vec![
            LayerSpec { weights: w0, bias: vec![0.0; h], act: Activation::Relu },
            LayerSpec { weights: Matrix::zeros(2, h), bias: vec![0.0; 2], act: Activation::Softmax },
        ])
        .unwrap()
    }

    #[test]
    fn decide_picks_smallest_norms() {
        let net = one_layer_net(&[5.0, 0.1, 3.0, 0.2]);
        let groups = group_view(&net);
        let c = DpmConfig { groups_per_decision: 2, sparsity_target: 0.5, ..DpmConfig::default() };
        let d = decide_prune(&net, &groups, &[DecayState::default(); 4], &c, 7).unwrap();
        assert_eq!(d, DecisionList { step: 7, group_ids: vec![1, 3] });
    }

    #[test]
    fn decide_with_everything_decaying_fails() {
        let net = one_layer_net(&[5.0, 0.1, 3.0, 0.2]);
        let groups = group_view(&net);
        let busy = DecayState { n_step: 1, l_init: 1.0, is_decay: true };
        let c = DpmConfig { sparsity_target: 0.75, groups_per_decision: 1, ..DpmConfig::default() };
        // budget is zero once three of four are pruned
        assert_eq!(decide_prune(&net, &groups, &[busy; 4], &c, 0).unwrap().group_ids, Vec::<usize>::new());
        assert_eq!(select_groups(&net, &groups, &[true; 4], 1, 1e-12), Err(DpmError::NothingToPrune));
    }

    #[test]
    fn tie_break_by_group_id() {
        let net = one_layer_net(&[1.0, 1.0, 1.0, 1.0]);
        let groups = group_view(&net);
        assert_eq!(select_groups(&net, &groups, &[false; 4], 2, 1e-12).unwrap(), vec![0, 1]);
    }

    #[test]
    fn layer_protection() {
        // Two hidden layers of two channels; layer 0 has one channel zeroed.
        use crate::nn::{Activation, LayerSpec};
        use crate::tensor::Matrix;
        let net = Network::from_layers(vec![
            LayerSpec {
                weights: Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap(),
                bias: vec![0.0, 0.0],
                act: Activation::Relu,
            },
            LayerSpec {
                weights: Matrix::from_rows(&[vec![0.0, 0.5], vec![0.0, 0.7]]).unwrap(),
                bias: vec![0.0, 0.0],
                act: Activation::Relu,
            },
            LayerSpec {
                weights: Matrix::from_rows(&[vec![0.3, 0.2], vec![0.1, 0.4]]).unwrap(),
                bias: vec![0.0, 0.0],
                act: Activation::Softmax,
            },
        ])
        .unwrap();
        let groups = group_view(&net);
        // group 0 is all zero: its row, bias and column are zero
        assert_eq!(net.group_norm(&groups[0]), 0.0);
        let picked = select_groups(&net, &groups, &[false; 4], 3, 1e-12).unwrap();
        // layer 0 has one live channel left: protected; layer 1 gives up one of two
        assert!(picked.iter().all(|&i| groups[i].layer_id == 1));
        assert_eq!(picked.len(), 1);
    }

    proptest! {
        #[test]
        fn c_rate_is_bounded(pair in (1usize..12).prop_flat_map(|n| (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        ))) {
            let (x, y) = pair;
            if let Ok(r) = compute_c_rate(&x, &y, 1e-12) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            }
        }

        #[test]
        fn c_len_ignores_peer_order(own in 0.0f64..5.0, mut peers in prop::collection::vec(0.01f64..5.0, 1..10), seed in any::<u64>()) {
            let a = compute_c_len(&[own], &peers).unwrap();
            let mut rng = crate::tensor::Rng::new(seed);
            rng.shuffle(&mut peers);
            let b = compute_c_len(&[own], &peers).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn projection_respects_target_and_direction(
            x in prop::collection::vec(-3.0f64..3.0, 2..10),
            noise_seed in any::<u64>(),
            n in 1usize..10,
            done in 0usize..9,
        ) {
            prop_assume!(done < n && l2_norm(&x) > 1e-3);
            let mut rng = crate::tensor::Rng::new(noise_seed);
            let grad = rng.normal(x.len(), 0.0, 1.0).into_inner();
            let x_tilde = sgd_tilde(&x, &grad, 0.05);
            let l_init = l2_norm(&x) * 1.3;
            let state = DecayState { n_step: done, l_init, is_decay: true };
            let out = decay_step(GroupStep::plain(&x, &x_tilde, &grad, &[1.0]), state, &cfg(n, f64::INFINITY, 0.0));
            let target = compute_l_target(l_init, n, done + 1);
            prop_assert!(out.weights.norm() <= target * (1.0 + 1e-12) + 1e-15);
            prop_assert!(out.state.n_step > done);
            if out.branch == DecayBranch::Projected && target > 0.0 {
                prop_assert!(crate::tensor::cosine_similarity(&out.weights, &x_tilde) >= 1.0 - 1e-12);
            }
        }

        #[test]
        fn never_released_group_reaches_zero_within_n_calls(
            seed in any::<u64>(),
            n in 1usize..12,
        ) {
            let mut rng = crate::tensor::Rng::new(seed);
            let mut x = rng.normal(6, 0.0, 1.0).into_inner();
            let mut state = DecayState { n_step: 0, l_init: l2_norm(&x), is_decay: true };
            let c = cfg(n, f64::INFINITY, 0.0);
            let mut calls = 0;
            while !state.is_frozen(n) {
                let grad = rng.normal(6, 0.0, 1.0).into_inner();
                let x_tilde = sgd_tilde(&x, &grad, 0.1);
                let out = decay_step(GroupStep::plain(&x, &x_tilde, &grad, &[1.0]), state, &c);
                prop_assert!(out.state.n_step > state.n_step);
                state = out.state;
                x = out.weights.into_inner();
                calls += 1;
            }
            prop_assert!(calls <= n);
            prop_assert!(x.iter().all(|&v| v == 0.0));
        }
    }
}
