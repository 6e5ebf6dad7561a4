// Feeds the decay step three tentative updates. A strong outward pull along
// the group's own direction triggers a release. An inward pull keeps the
// group on the schedule, and so does an outward pull whose gradient is weak
// next to its peers.
//
//     cargo run --example self_rectify

use decay_prune::dpm::{decay_step, DecayBranch, DecayState, GroupStep};
use decay_prune::DpmConfig;

/// Case name, branch taken and resulting norm.
type Case = (String, DecayBranch, f64);

fn run_example() -> Result<Vec<Case>, Box<dyn std::error::Error>> {
    let cfg = DpmConfig { n_steps: 5, t_rate: 0.3, t_len: 0.2, ..DpmConfig::default() };
    let state = DecayState { n_step: 1, l_init: 5.0, is_decay: true };
    let x = [3.0, 4.0];
    let peers = [1.0, 1.0, 1.0];

    let cases = [
        ("outward pull", [3.3, 4.4], [-3.0, -4.0]),
        ("inward pull", [2.7, 3.6], [3.0, 4.0]),
        ("weak outward pull", [3.03, 4.04], [-0.03, -0.04]),
    ];
    let mut out = Vec::new();
    for (name, x_tilde, grad) in cases {
        let step = decay_step(GroupStep::plain(&x, &x_tilde, &grad, &peers), state, &cfg);
        out.push((name.to_string(), step.branch, step.weights.norm()));
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, branch, norm) in run_example()? {
        println!("{name:<18} -> {branch:?}, norm {norm:.3}");
    }
    Ok(())
}
