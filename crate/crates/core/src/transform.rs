//! Randomized Hadamard rotation and the real-to-integer grid.
//!
//! The rotation is the unnormalized `H·D`: a random ±1 diagonal followed by
//! the Walsh–Hadamard matrix. Integer inputs stay integers; the `1/sqrt(d)`
//! normalization is folded into [`inverse_rotate`], which maps a vector in
//! rotated coordinates back with `D·H / d_pad`.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Largest magnitude the integer transform accepts: `d_pad · max|v| < 2^62`.
const FWHT_LIMIT: i128 = 1 << 62;

fn butterflies<T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T>>(v: &mut [T]) {
    let mut half = 1;
    while half < v.len() {
        for block in v.chunks_exact_mut(half * 2) {
            let (l, r) = block.split_at_mut(half);
            for (a, b) in l.iter_mut().zip(r.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half *= 2;
    }
}

/// Unnormalized Walsh–Hadamard transform `H·v` on integers.
///
/// Fails if the length is not a power of two or if an intermediate value
/// could leave the 64-bit range.
pub fn fwht(v: &[i64]) -> Result<Vec<i64>> {
    if !v.len().is_power_of_two() {
        return Err(Error::InvalidArgument(format!("length {} is not a power of two", v.len())));
    }
    let max = v.iter().map(|x| (*x as i128).abs()).max().unwrap_or(0);
    if max * v.len() as i128 >= FWHT_LIMIT {
        return Err(Error::Overflow("fwht"));
    }
    let mut out = v.to_vec();
    butterflies(&mut out);
    Ok(out)
}

/// Unnormalized Walsh–Hadamard transform on reals.
pub fn fwht_real(v: &[f64]) -> Result<Vec<f64>> {
    if !v.len().is_power_of_two() {
        return Err(Error::InvalidArgument(format!("length {} is not a power of two", v.len())));
    }
    let mut out = v.to_vec();
    butterflies(&mut out);
    Ok(out)
}

/// Padded dimension and random signs of one `H·D` rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationContext {
    d_orig: usize,
    d_pad: usize,
    signs: Vec<i8>,
}

impl RotationContext {
    /// Fresh uniform signs for dimension `d_orig`, padded to the next power of two.
    pub fn new(d_orig: usize, signs_stream: &mut Stream) -> Result<Self> {
        let d_pad = padded_dimension(d_orig)?;
        let signs = (0..d_pad).map(|_| signs_stream.sign()).collect();
        Ok(Self { d_orig, d_pad, signs })
    }

    pub fn with_signs(d_orig: usize, signs: Vec<i8>) -> Result<Self> {
        let d_pad = padded_dimension(d_orig)?;
        if signs.len() != d_pad {
            return Err(Error::DimensionMismatch { expected: d_pad, got: signs.len() });
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidArgument("signs must be ±1".into()));
        }
        Ok(Self { d_orig, d_pad, signs })
    }

    pub fn d_orig(&self) -> usize {
        self.d_orig
    }

    pub fn d_pad(&self) -> usize {
        self.d_pad
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
}

/// `2^⌈log₂ d⌉`.
pub fn padded_dimension(d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    d.checked_next_power_of_two().ok_or(Error::Overflow("padded dimension"))
}

/// `H·D·pad(x)`, exact.
pub fn rotate(ctx: &RotationContext, x: &[i64]) -> Result<Vec<i64>> {
    if x.len() != ctx.d_orig {
        return Err(Error::DimensionMismatch { expected: ctx.d_orig, got: x.len() });
    }
    let mut v = vec![0i64; ctx.d_pad];
    for ((slot, &xi), &s) in v.iter_mut().zip(x).zip(&ctx.signs) {
        *slot = xi * s as i64;
    }
    fwht(&v)
}

/// `H·D·pad(x)` for real vectors.
pub fn rotate_real(ctx: &RotationContext, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != ctx.d_orig {
        return Err(Error::DimensionMismatch { expected: ctx.d_orig, got: x.len() });
    }
    let mut v = vec![0.0; ctx.d_pad];
    for ((slot, &xi), &s) in v.iter_mut().zip(x).zip(&ctx.signs) {
        *slot = xi * s as f64;
    }
    fwht_real(&v)
}

/// `(H·D)^{-1} y = D·H·y / d_pad`, truncated to the original dimension.
pub fn inverse_rotate(ctx: &RotationContext, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != ctx.d_pad {
        return Err(Error::DimensionMismatch { expected: ctx.d_pad, got: y.len() });
    }
    let h = fwht_real(y)?;
    let scale = ctx.d_pad as f64;
    Ok(h.iter().zip(&ctx.signs).take(ctx.d_orig).map(|(v, &s)| v * s as f64 / scale).collect())
}

/// Rotates every row of a dataset. Rotated coordinates lie in
/// `[-d_pad·u, d_pad·u]`; the result is a signed dataset with that bound.
pub fn rotate_dataset(ctx: &RotationContext, data: &Dataset) -> Result<Dataset> {
    let bound = (ctx.d_pad as u64).checked_mul(data.bound()).ok_or(Error::Overflow("rotated bound"))?;
    let mut flat = Vec::with_capacity(data.n() * ctx.d_pad);
    for r in data.rows() {
        flat.extend(rotate(ctx, r)?);
    }
    Dataset::signed(flat, ctx.d_pad, bound)
}

/// Uniform per-coordinate grid over `[-R, R]` with bucket `α/sqrt(d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationGrid {
    range_bound: f64,
    bucket: f64,
    u: u64,
}

impl QuantizationGrid {
    pub fn new(range_bound: f64, alpha: f64, d: usize) -> Result<Self> {
        if !(range_bound > 0.0) || !(alpha > 0.0) || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs R > 0, alpha > 0, d > 0 (got R={range_bound}, alpha={alpha}, d={d})"
            )));
        }
        let bucket = alpha / (d as f64).sqrt();
        let cells = 2.0 * range_bound / bucket;
        if !(cells < 2f64.powi(62)) {
            return Err(Error::Overflow("quantization universe"));
        }
        // absorb float noise in 2R/bucket before rounding up
        let mut u = (cells * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        if (u as f64) * bucket < 2.0 * range_bound {
            u += 1;
        }
        Ok(Self { range_bound, bucket, u })
    }

    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }

    pub fn bucket(&self) -> f64 {
        self.bucket
    }

    pub fn universe(&self) -> u64 {
        self.u
    }

    pub fn index(&self, x: f64) -> Result<i64> {
        if !(x.abs() <= self.range_bound) {
            return Err(Error::OutOfRange {
                value: x.to_string(),
                range: format!("[-{r}, {r}]", r = self.range_bound),
            });
        }
        let idx = ((x + self.range_bound) / self.bucket).round();
        Ok(idx.clamp(0.0, self.u as f64) as i64)
    }

    /// Representative point of a (possibly fractional) grid index.
    pub fn value(&self, index: f64) -> f64 {
        index * self.bucket - self.range_bound
    }
}

/// Maps each real coordinate to its nearest grid index in `[0, u]`.
pub fn quantize(xs: &[Vec<f64>], grid: &QuantizationGrid) -> Result<Dataset> {
    let d = xs.first().map(|r| r.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(xs.len() * d);
    for r in xs {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        for &x in r {
            flat.push(grid.index(x)?);
        }
    }
    Dataset::from_flat(flat, d, grid.universe())
}

/// Inverse of [`quantize`] on grid points.
pub fn dequantize(data: &Dataset, grid: &QuantizationGrid) -> Vec<Vec<f64>> {
    data.rows().map(|r| r.iter().map(|&i| grid.value(i as f64)).collect()).collect()
}
