// Writes a tiny synthetic image set in the IDX format used by MNIST, reads
// it back and trains on it. Pass a directory holding the four MNIST files
// to use the real data instead.
//
//     cargo run --release --example idx_dataset [mnist_dir]

use std::path::{Path, PathBuf};

use decay_prune::harness::{encode_idx_images, encode_idx_labels, load_idx, DatasetSpec, RunSummary};
use decay_prune::tensor::Rng;
use decay_prune::{run_experiment, ExperimentConfig, Method};

const SIDE: usize = 6;

/// Class `c` lights up row `c` of a 6x6 image, plus noise.
fn write_split(dir: &Path, name: &str, count: usize, rng: &mut Rng) -> std::io::Result<(PathBuf, PathBuf)> {
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % 4;
        labels.push(class as u8);
        let pixels = (0..SIDE * SIDE).map(|p| {
            let base = if p / SIDE == class { 200.0 } else { 20.0 };
            (base + 40.0 * rng.uniform()) as u8
        });
        images.push(pixels.collect());
    }
    let img = dir.join(format!("{name}-images-idx3-ubyte"));
    let lab = dir.join(format!("{name}-labels-idx1-ubyte"));
    std::fs::write(&img, encode_idx_images(SIDE as u32, SIDE as u32, &images))?;
    std::fs::write(&lab, encode_idx_labels(&labels))?;
    Ok((img, lab))
}

fn run_example(dir: &Path, epochs: usize) -> Result<(usize, RunSummary), Box<dyn std::error::Error>> {
    let mut rng = Rng::new(5);
    let (train_images, train_labels) = write_split(dir, "train", 400, &mut rng)?;
    let (test_images, test_labels) = write_split(dir, "t10k", 100, &mut rng)?;
    let loaded = load_idx(&train_images, &train_labels)?;

    let cfg = ExperimentConfig {
        hidden: vec![16, 16],
        dataset: DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, limit: None },
        method: Method::Sp,
        epochs,
        ..ExperimentConfig::default()
    };
    Ok((loaded.labels.len(), run_experiment(&cfg, None)?.summary))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if let Some(mnist) = std::env::args().nth(1) {
        let cfg = ExperimentConfig::mnist_benchmark(Path::new(&mnist));
        let s = run_experiment(&cfg, None)?.summary;
        println!("mnist: accuracy {:.2}%, flops {:.3}", 100.0 * s.final_accuracy, s.final_flops_fraction);
        return Ok(());
    }
    let dir = std::env::temp_dir().join("decay-prune-idx-example");
    std::fs::create_dir_all(&dir)?;
    let (n, s) = run_example(&dir, 10)?;
    println!("read {n} training images from {}", dir.display());
    println!(
        "accuracy {:.2}%, group sparsity {:.3}, flops {:.3}",
        100.0 * s.final_accuracy,
        s.final_group_sparsity,
        s.final_flops_fraction
    );
    Ok(())
}
