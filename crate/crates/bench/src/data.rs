//! Synthetic and real datasets.

use std::fs;
use std::path::Path;

use dpmean::rng::Stream;
use dpmean::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::BenchError;

/// `N(μ, A·Λ·Aᵀ)` with `A` Haar-random orthogonal and `Λ` diagonal.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub mu: DVector<f64>,
    pub rotation: DMatrix<f64>,
    pub variances: DVector<f64>,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn haar_orthogonal(d: usize, rng: &mut Stream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl GaussianModel {
    /// Eigenvalues uniform in `[1, κ]` (all ones when `κ = 1`).
    pub fn new(mu: Vec<f64>, kappa: f64, rng: &mut Stream) -> Result<Self, BenchError> {
        if !(kappa >= 1.0) {
            return Err(BenchError::Config(format!("kappa must be at least 1, got {kappa}")));
        }
        let d = mu.len();
        let rotation = haar_orthogonal(d, rng);
        let variances = DVector::from_fn(d, |_, _| if kappa == 1.0 { 1.0 } else { rng.random_range(1.0..=kappa) });
        Ok(Self { mu: DVector::from_vec(mu), rotation, variances })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.rotation * DMatrix::from_diagonal(&self.variances) * self.rotation.transpose()
    }

    pub fn sample(&self, n: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
        let scale = self.variances.map(f64::sqrt);
        (0..n)
            .map(|_| {
                let z = DVector::from_fn(self.dim(), |i, _| scale[i] * rng.sample::<f64, _>(StandardNormal));
                (&self.mu + &self.rotation * z).as_slice().to_vec()
            })
            .collect()
    }

    /// `‖Σ^{-1/2}(x - μ)‖₂`.
    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mu;
        let w = self.rotation.transpose() * diff;
        w.iter().zip(self.variances.iter()).map(|(v, s)| v * v / s).sum::<f64>().sqrt()
    }
}

/// Draws a model and `n` samples from it.
pub fn gen_gaussian(n: usize, mu: Vec<f64>, kappa: f64, rng: &mut Stream) -> Result<(GaussianModel, Vec<Vec<f64>>), BenchError> {
    let model = GaussianModel::new(mu, kappa, rng)?;
    let samples = model.sample(n, rng);
    Ok((model, samples))
}

/// Rows `i·1_d` for `i = 1..=n`, universe `[0, n]`.
pub fn gen_line(n: usize, d: usize) -> Dataset {
    let flat = (1..=n as i64).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    Dataset::from_flat(flat, d, n as u64).expect("line data lies in its universe")
}

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// Pixel values are scaled into `[0, 2^10]`.
pub const MNIST_UNIVERSE: u64 = 1 << 10;
pub const MNIST_PIXEL_SCALE: i64 = 4;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32, BenchError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| BenchError::Data(format!("{what}: truncated header")))
}

/// IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), BenchError> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(BenchError::Data(format!("images: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let body = &bytes[16..];
    let want = count * rows * cols;
    if body.len() != want {
        return Err(BenchError::Data(format!("images: expected {want} pixel bytes, found {}", body.len())));
    }
    Ok((count, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, BenchError> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(BenchError::Data(format!("labels: bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(BenchError::Data(format!("labels: expected {count} labels, found {}", body.len())));
    }
    Ok(body.to_vec())
}

/// Images with the given label (all images when `digit` is `None`), pixels
/// scaled by 4.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8], digit: Option<u8>) -> Result<Dataset, BenchError> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(BenchError::Data(format!("{count} images but {} labels", labels.len())));
    }
    let d = rows * cols;
    let mut flat = Vec::new();
    for (img, &label) in pixels.chunks_exact(d).zip(&labels) {
        if digit.is_none_or(|want| want == label) {
            flat.extend(img.iter().map(|&p| i64::from(p) * MNIST_PIXEL_SCALE));
        }
    }
    if flat.is_empty() {
        return Err(BenchError::Data(format!("no images with label {digit:?}")));
    }
    Dataset::from_flat(flat, d, MNIST_UNIVERSE).map_err(|e| BenchError::Data(e.to_string()))
}

pub fn load_mnist(images: &Path, labels: &Path, digit: Option<u8>) -> Result<Dataset, BenchError> {
    let read = |p: &Path| fs::read(p).map_err(|e| BenchError::Data(format!("{}: {e}", p.display())));
    mnist_from_bytes(&read(images)?, &read(labels)?, digit)
}
