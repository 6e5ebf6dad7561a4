//! Dense float vectors and matrices, L2 norms, norm projection and a seeded,
//! stream-splittable random number generator.

use std::ops::{Deref, Sub};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("cannot scale a zero vector to norm {target}")]
    ZeroVectorScale { target: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// A fixed-length vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(data: Vec<f64>) -> Result<Self, TensorError> {
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TensorError::NonFinite { index, value });
        }
        Ok(Vec64(data))
    }

    pub fn zeros(len: usize) -> Self {
        Vec64(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Vec64 {
        Vec64(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl Deref for Vec64 {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vec64 {
    type Error = TensorError;

    fn try_from(data: Vec<f64>) -> Result<Self, Self::Error> {
        Vec64::new(data)
    }
}

impl<const K: usize> From<[f64; K]> for Vec64 {
    /// Panics on non-finite input; meant for literals.
    fn from(data: [f64; K]) -> Self {
        Vec64::new(data.to_vec()).expect("finite literal")
    }
}

impl Sub for &Vec64 {
    type Output = Vec64;

    fn sub(self, rhs: &Vec64) -> Vec64 {
        assert_eq!(self.len(), rhs.len(), "length mismatch in subtraction");
        Vec64(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

/// Euclidean norm. The empty vector has norm 0.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `v` to have L2 norm `target`, keeping its direction.
pub fn scale_to_norm(v: &Vec64, target: f64) -> Result<Vec64, TensorError> {
    if target == 0.0 {
        return Ok(Vec64::zeros(v.len()));
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(TensorError::ZeroVectorScale { target });
    }
    Ok(v.scaled(target / norm))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (l2_norm(a) * l2_norm(b))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch { left: data.len(), right: rows * cols });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::LengthMismatch { left: r.len(), right: cols });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// Seeded generator backed by ChaCha8, a counter-based stream cipher. Each
/// `(seed, stream)` pair yields an independent, reproducible sequence.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent generator for a sub-task.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::with_stream(self.seed, stream.wrapping_add(1))
    }

    pub fn normal(&mut self, n: usize, mean: f64, std: f64) -> Vec64 {
        assert!(std >= 0.0 && std.is_finite(), "std must be finite and nonnegative");
        if std == 0.0 {
            return Vec64(vec![mean; n]);
        }
        let dist = Normal::new(mean, std).expect("valid normal parameters");
        Vec64((0..n).map(|_| dist.sample(&mut self.inner)).collect())
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Free-function form of [`Rng::normal`].
pub fn rng_normal(rng: &mut Rng, n: usize, mean: f64, std: f64) -> Vec64 {
    rng.normal(n, mean, std)
}
