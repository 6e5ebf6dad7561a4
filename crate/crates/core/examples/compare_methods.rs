// Runs single-step pruning, smooth decay and decay with release on the same
// seeds and prints the seed-averaged table.
//
//     cargo run --release --example compare_methods [seeds]

use decay_prune::harness::{compare_methods, Comparison};
use decay_prune::ExperimentConfig;

fn run_example(seeds: &[u64], epochs: usize) -> Result<Comparison, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { epochs, ..ExperimentConfig::blobs_benchmark() };
    Ok(compare_methods(&cfg, seeds, 1, None)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let seeds: Vec<u64> = (0..count).collect();
    print!("{}", run_example(&seeds, 20)?.table());
    Ok(())
}
