//! Single-step pruning: selected groups are zeroed the moment they are chosen
//! and held at zero for the rest of training. Selection goes through the
//! same code path as [`crate::dpm::decide_prune`].

use crate::dpm::{coord_mask, select_groups, DecisionList, DpmConfig, DpmError};
use crate::nn::{group_view, GradSnapshot, GroupIndex, Network, Sgd};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineState {
    pub pruned: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SingleStepPruner {
    groups: Vec<GroupIndex>,
    state: BaselineState,
    cfg: DpmConfig,
}

impl SingleStepPruner {
    pub fn new(net: &Network, cfg: DpmConfig) -> Result<Self, DpmError> {
        cfg.validate()?;
        let groups = group_view(net);
        let state = BaselineState { pruned: vec![false; groups.len()] };
        Ok(SingleStepPruner { groups, state, cfg })
    }

    pub fn groups(&self) -> &[GroupIndex] {
        &self.groups
    }

    pub fn state(&self) -> &BaselineState {
        &self.state
    }

    pub fn pruned_count(&self) -> usize {
        self.state.pruned.iter().filter(|&&p| p).count()
    }

    pub fn target_reached(&self) -> bool {
        self.pruned_count() >= self.cfg.target_count(self.groups.len())
    }

    /// Selects groups exactly as the decay pruner would and zeroes them now.
    pub fn single_step_prune(&mut self, net: &mut Network, step: u64) -> Result<DecisionList, DpmError> {
        let budget = self
            .cfg
            .groups_per_decision
            .min(self.cfg.target_count(self.groups.len()).saturating_sub(self.pruned_count()));
        let group_ids = select_groups(net, &self.groups, &self.state.pruned, budget, self.cfg.zero_epsilon)?;
        for &i in &group_ids {
            self.state.pruned[i] = true;
            for &c in &self.groups[i].coords {
                net.params_mut()[c] = 0.0;
            }
        }
        Ok(DecisionList { step, group_ids })
    }

    /// Plain optimizer step with pruned coordinates held at zero.
    pub fn tick(&mut self, net: &mut Network, grads: &GradSnapshot, sgd: &mut Sgd) -> Result<(), DpmError> {
        let mask = coord_mask(&self.groups, net.num_params(), |i| self.state.pruned[i]);
        let pre = sgd.pre_update(net.params(), &grads.values, &mask);
        net.set_params(pre.tilde)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpm::DecayPruner;
    use crate::tensor::{Matrix, Rng};

    #[test]
    fn first_decision_matches_decay_pruner() {
        let mut rng = Rng::new(9);
        let net = Network::mlp(&[4, 8, 6, 3], &mut rng).unwrap();
        let cfg = DpmConfig { groups_per_decision: 4, sparsity_target: 0.5, ..DpmConfig::default() };
        let mut dpm = DecayPruner::new(&net, cfg).unwrap();
        let mut single = SingleStepPruner::new(&net, cfg).unwrap();
        let a = dpm.decide(&net, 3).unwrap();
        let mut net2 = net.clone();
        let b = single.single_step_prune(&mut net2, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pruned_groups_stay_zero_and_inert() {
        let mut rng = Rng::new(2);
        let mut net = Network::mlp(&[3, 6, 3], &mut rng).unwrap();
        let cfg = DpmConfig { groups_per_decision: 2, sparsity_target: 0.5, ..DpmConfig::default() };
        let mut single = SingleStepPruner::new(&net, cfg).unwrap();
        let decision = single.single_step_prune(&mut net, 0).unwrap();
        let x = Matrix::from_vec(8, 3, rng.normal(24, 0.0, 1.0).into_inner()).unwrap();
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let mut sgd = Sgd::new(crate::nn::SgdConfig { lr: 0.1, momentum: 0.9, l2: 1e-3 }, net.num_params());
        for _ in 0..20 {
            let (_, g) = net.backward(&x, &labels).unwrap();
            single.tick(&mut net, &g, &mut sgd).unwrap();
        }
        for &i in &decision.group_ids {
            assert!(net.read_group(&single.groups()[i]).unwrap().iter().all(|v| v.to_bits() == 0));
        }
        let before = net.predict(&x).unwrap();
        let g = &single.groups()[decision.group_ids[0]];
        for &c in g.own_coords() {
            net.params_mut()[c] = -2.5;
        }
        assert_eq!(net.predict(&x).unwrap(), before);
    }
}
