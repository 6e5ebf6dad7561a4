// Sweeps the number of decay steps and prints mean accuracy and remaining
// FLOPs for each value.
//
//     cargo run --release --example decay_length_sweep

use decay_prune::harness::{run_sweep, SweepAxis, SweepSummary};
use decay_prune::ExperimentConfig;

fn run_example(values: &[f64], seeds: &[u64], epochs: usize) -> Result<SweepSummary, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { epochs, ..ExperimentConfig::blobs_benchmark() };
    Ok(run_sweep(&cfg, SweepAxis::N, values, seeds, 1, None)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sweep = run_example(&[1.0, 3.0, 5.0, 16.0, 64.0], &[0, 1, 2], 20)?;
    println!("{:>5} {:>9} {:>7} {:>9}", "N", "accuracy", "flops", "releases");
    for r in &sweep.rows {
        println!(
            "{:>5} {:>8.2}% {:>7.3} {:>9.1}",
            r.value,
            100.0 * r.final_accuracy,
            r.final_flops_fraction,
            r.total_releases
        );
    }
    Ok(())
}
