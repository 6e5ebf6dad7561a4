//! IDX (MNIST-style) image and label files.

use std::path::Path;

use thiserror::Error;

use super::data::{Dataset, Samples, Split};
use crate::tensor::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("{path}: truncated, needed {needed} bytes but found {found}")]
    TruncatedFile { path: String, needed: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

fn header(bytes: &[u8], words: usize, path: &Path) -> Result<Vec<u32>, IdxError> {
    let needed = 4 * words;
    if bytes.len() < needed {
        return Err(IdxError::TruncatedFile { path: path.display().to_string(), needed, found: bytes.len() });
    }
    Ok(bytes[..needed].chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn check_magic(found: u32, expected: u32, path: &Path) -> Result<(), IdxError> {
    if found != expected {
        return Err(IdxError::BadMagic { path: path.display().to_string(), expected, found });
    }
    Ok(())
}

/// Images as rows of pixels scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<Matrix, IdxError> {
    let bytes = read(path)?;
    let head = header(&bytes, 1, path)?;
    check_magic(head[0], IMAGES_MAGIC, path)?;
    let head = header(&bytes, 4, path)?;
    let (count, rows, cols) = (head[1] as usize, head[2] as usize, head[3] as usize);
    let dims = rows * cols;
    let needed = 16 + count * dims;
    if bytes.len() < needed {
        return Err(IdxError::TruncatedFile { path: path.display().to_string(), needed, found: bytes.len() });
    }
    let data = bytes[16..needed].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Matrix::from_vec(count, dims, data).expect("sized above"))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>, IdxError> {
    let bytes = read(path)?;
    let head = header(&bytes, 1, path)?;
    check_magic(head[0], LABELS_MAGIC, path)?;
    let count = header(&bytes, 2, path)?[1] as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(IdxError::TruncatedFile { path: path.display().to_string(), needed, found: bytes.len() });
    }
    Ok(bytes[8..needed].iter().map(|&b| usize::from(b)).collect())
}

/// Reads an image/label pair; every sample is tagged as training data.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    let features = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if features.rows != labels.len() {
        return Err(IdxError::CountMismatch { images: features.rows, labels: labels.len() });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let split = vec![Split::Train; labels.len()];
    Ok(Dataset { features, labels, split, num_classes })
}

/// Loads separate train and test file pairs into one dataset.
pub fn load_idx_splits(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<Dataset, IdxError> {
    let train = load_idx(train_images, train_labels)?;
    let test = load_idx(test_images, test_labels)?;
    let classes = train.num_classes.max(test.num_classes);
    Ok(Dataset::from_splits(
        Samples { features: train.features, labels: train.labels },
        Samples { features: test.features, labels: test.labels },
        classes,
    ))
}

/// Encodes images (`count` rows of `rows * cols` bytes) as an IDX file.
pub fn encode_idx_images(rows: u32, cols: u32, pixels: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for word in [IMAGES_MAGIC, pixels.len() as u32, rows, cols] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
