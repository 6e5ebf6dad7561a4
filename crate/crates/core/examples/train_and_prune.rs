// Trains a 16-64-64-4 MLP on Gaussian blobs while decaying half of its
// channels, then prints accuracy, cost and release counts.
//
//     cargo run --release --example train_and_prune [out_dir]

use decay_prune::harness::RunSummary;
use decay_prune::{run_experiment, ExperimentConfig, Method};

fn run_example(epochs: usize, out: Option<&std::path::Path>) -> Result<RunSummary, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { method: Method::SpSr, epochs, ..ExperimentConfig::blobs_benchmark() };
    Ok(run_experiment(&cfg, out)?.summary)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let s = run_example(20, out.as_deref())?;
    println!("test accuracy   {:.2}%", 100.0 * s.final_accuracy);
    println!("group sparsity  {:.3}", s.final_group_sparsity);
    println!("flops fraction  {:.3}", s.final_flops_fraction);
    println!("params fraction {:.3}", s.final_params_fraction);
    println!("releases        {}", s.total_releases);
    if let Some(dir) = out {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}
