//! Synthetic datasets and mini-batching.

use crate::tensor::{l2_norm, Matrix, Rng};

/// Features and labels of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Samples {
        Samples { features: self.features.select_rows(idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// All samples with a train/test tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn from_splits(train: Samples, test: Samples, num_classes: usize) -> Dataset {
        let mut features = train.features;
        features.data.extend_from_slice(&test.features.data);
        features.rows += test.features.rows;
        let split = std::iter::repeat_n(Split::Train, train.labels.len())
            .chain(std::iter::repeat_n(Split::Test, test.labels.len()))
            .collect();
        let mut labels = train.labels;
        labels.extend(test.labels);
        Dataset { features, labels, split, num_classes }
    }

    pub fn dims(&self) -> usize {
        self.features.cols
    }

    fn part(&self, which: Split) -> Samples {
        let idx: Vec<usize> = (0..self.labels.len()).filter(|&i| self.split[i] == which).collect();
        Samples { features: self.features.select_rows(&idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }

    pub fn train(&self) -> Samples {
        self.part(Split::Train)
    }

    pub fn test(&self) -> Samples {
        self.part(Split::Test)
    }
}

/// Every fifth sample of each class goes to the test split.
fn tag_for(index_in_class: usize) -> Split {
    if index_in_class % 5 == 4 {
        Split::Test
    } else {
        Split::Train
    }
}

/// Isotropic unit-variance Gaussian clusters, one per class. Centers sit on a
/// sphere of radius `separation` and are redrawn until every pair is at least
/// `separation` apart.
pub fn gen_blobs(rng: &mut Rng, classes: usize, samples_per_class: usize, dims: usize, separation: f64) -> Dataset {
    assert!(separation > 0.0, "separation must be positive");
    assert!(classes >= 1 && dims >= 1);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut attempts = 0usize;
    while centers.len() < classes {
        let dir = rng.normal(dims, 0.0, 1.0).into_inner();
        let norm = l2_norm(&dir).max(f64::MIN_POSITIVE);
        // past the first thousand rejections, push the sphere outward
        let radius = separation * (1.0 + (attempts / 1000) as f64);
        let c: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
        let far_enough =
            centers.iter().all(|o| l2_norm(&o.iter().zip(&c).map(|(a, b)| a - b).collect::<Vec<_>>()) >= separation);
        attempts += 1;
        if far_enough {
            centers.push(c);
        }
    }

    let n = classes * samples_per_class;
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for i in 0..samples_per_class {
            let noise = rng.normal(dims, 0.0, 1.0);
            data.extend(center.iter().zip(noise.iter()).map(|(c, e)| c + e));
            labels.push(class);
            split.push(tag_for(i));
        }
    }
    Dataset { features: Matrix::from_vec(n, dims, data).expect("sized above"), labels, split, num_classes: classes }
}

/// Two interleaved half circles with Gaussian noise.
pub fn gen_moons(rng: &mut Rng, samples_per_class: usize, noise: f64) -> Dataset {
    let mut data = Vec::with_capacity(samples_per_class * 4);
    let mut labels = Vec::new();
    let mut split = Vec::new();
    for class in 0..2 {
        for i in 0..samples_per_class {
            let t = std::f64::consts::PI * rng.uniform();
            let (x, y) = if class == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            let e = rng.normal(2, 0.0, noise);
            data.push(x + e[0]);
            data.push(y + e[1]);
            labels.push(class);
            split.push(tag_for(i));
        }
    }
    let n = labels.len();
    Dataset { features: Matrix::from_vec(n, 2, data).expect("sized above"), labels, split, num_classes: 2 }
}

/// Shuffled mini-batch index lists covering every sample once.
pub fn epoch_batches(rng: &mut Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
