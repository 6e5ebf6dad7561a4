// Trains and prunes, reloads the saved checkpoint, then overwrites the
// incoming weights of every pruned channel with noise and checks that the
// network's outputs do not move.
//
//     cargo run --release --example checkpoint_inertness

use std::path::Path;

use decay_prune::tensor::Rng;
use decay_prune::{run_experiment, ExperimentConfig, Network};

pub struct Report {
    pub zeroed_groups: usize,
    pub all_exact_zero: bool,
    pub outputs_unchanged: bool,
}

fn run_example(dir: &Path, epochs: usize) -> Result<Report, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { epochs, ..ExperimentConfig::blobs_benchmark() };
    let run = run_experiment(&cfg, Some(dir))?;
    let mut net = Network::load_checkpoint(&dir.join("checkpoint.json"))?;

    let pruned: Vec<_> = run.groups.iter().filter(|g| run.zeroed[g.group_id]).collect();
    let all_exact_zero = pruned.iter().all(|g| g.coords.iter().all(|&c| net.params()[c].to_bits() == 0));

    let before = net.forward(&run.test.features)?;
    let mut rng = Rng::new(1);
    for g in &pruned {
        for &c in g.own_coords() {
            net.params_mut()[c] = rng.normal(1, 0.0, 10.0)[0];
        }
    }
    let outputs_unchanged = net.forward(&run.test.features)? == before;
    Ok(Report { zeroed_groups: pruned.len(), all_exact_zero, outputs_unchanged })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("decay-prune-checkpoint-example");
    let r = run_example(&dir, 10)?;
    println!("{} pruned channels, stored as exact zeros: {}", r.zeroed_groups, r.all_exact_zero);
    println!("outputs unchanged after perturbing their inputs: {}", r.outputs_unchanged);
    println!("checkpoint at {}", dir.join("checkpoint.json").display());
    Ok(())
}
