// Decays one channel group to zero over N steps with no gradient signal and
// prints its norm after every optimizer step.
//
//     cargo run --example decay_schedule

use decay_prune::dpm::DecayState;
use decay_prune::nn::{GradSnapshot, Sgd, SgdConfig};
use decay_prune::tensor::Rng;
use decay_prune::{group_view, DecayPruner, DpmConfig, Network};

/// Returns the group norm before decay and after each step.
fn run_example() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let mut net = Network::mlp(&[4, 8, 6, 3], &mut Rng::new(3))?;
    let groups = group_view(&net);
    let target = &groups[5];
    let l_init = net.group_norm(target);

    let cfg = DpmConfig { n_steps: 5, ..DpmConfig::default() };
    let mut pruner = DecayPruner::new(&net, cfg)?;
    pruner.states_mut()[target.group_id] = DecayState { n_step: 0, l_init, is_decay: true };

    let mut sgd = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.0, l2: 0.0 }, net.num_params());
    let zero = GradSnapshot { values: vec![0.0; net.num_params()], batch_id: 0 };
    let mut norms = vec![l_init];
    for step in 0..5 {
        pruner.tick(&mut net, &zero, &mut sgd, step)?;
        norms.push(net.group_norm(target));
    }
    Ok(norms)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let norms = run_example()?;
    for (k, n) in norms.iter().enumerate() {
        println!("after {k} step(s): norm {n:.6} ({:.0}% of start)", 100.0 * n / norms[0]);
    }
    Ok(())
}
