use crate::error::{Error, Result};

/// An n×d matrix of bounded integers.
///
/// Unsigned datasets hold coordinates in `[0, u]`. Signed datasets hold
/// coordinates in `[-bound, bound]`; they appear after shifting a rotated
/// dataset by its approximate center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    data: Vec<i64>,
    n: usize,
    d: usize,
    bound: u64,
    signed: bool,
}

impl Dataset {
    /// Rows with every coordinate in `[0, universe]`.
    pub fn new(rows: &[Vec<i64>], universe: u64) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(data, d, universe)
    }

    pub fn from_flat(data: Vec<i64>, d: usize, universe: u64) -> Result<Self> {
        Self::build(data, d, universe, false)
    }

    /// Rows with every coordinate in `[-bound, bound]`.
    pub fn signed(data: Vec<i64>, d: usize, bound: u64) -> Result<Self> {
        Self::build(data, d, bound, true)
    }

    fn build(data: Vec<i64>, d: usize, bound: u64, signed: bool) -> Result<Self> {
        if d == 0 || data.is_empty() {
            return Err(Error::InvalidArgument("dataset must have n ≥ 1 rows and d ≥ 1 columns".into()));
        }
        if data.len() % d != 0 {
            return Err(Error::DimensionMismatch { expected: d, got: data.len() % d });
        }
        if bound > i64::MAX as u64 {
            return Err(Error::InvalidArgument(format!("bound {bound} does not fit in i64")));
        }
        let lo = if signed { -(bound as i64) } else { 0 };
        if let Some(&bad) = data.iter().find(|&&x| x < lo || x > bound as i64) {
            return Err(Error::OutOfRange { value: bad.to_string(), range: format!("[{lo}, {bound}]") });
        }
        Ok(Self { n: data.len() / d, data, d, bound, signed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `u` for unsigned data, the absolute bound for signed data.
    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, i64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[i64] {
        &self.data
    }

    /// Exact squared ℓ2 norms.
    pub fn squared_norms(&self) -> Vec<u128> {
        self.rows().map(|r| r.iter().map(|&x| (x as i128 * x as i128) as u128).sum()).collect()
    }

    /// Public upper bound on any squared norm: `d · bound²`.
    pub fn squared_norm_universe(&self) -> u128 {
        self.d as u128 * self.bound as u128 * self.bound as u128
    }

    /// f(D), the empirical mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0i128; self.d];
        for r in self.rows() {
            for (a, &x) in acc.iter_mut().zip(r) {
                *a += x as i128;
            }
        }
        acc.into_iter().map(|a| a as f64 / self.n as f64).collect()
    }

    /// r(D) = max ‖x_i‖₂.
    pub fn radius(&self) -> f64 {
        self.squared_norms().into_iter().max().map(|s| (s as f64).sqrt()).unwrap_or(0.0)
    }

    /// w(D) = max ‖x_i − x_j‖₂, by brute force over all pairs.
    pub fn diameter(&self) -> f64 {
        let mut best: u128 = 0;
        for i in 0..self.n {
            let a = self.row(i);
            for j in (i + 1)..self.n {
                let s: u128 = a
                    .iter()
                    .zip(self.row(j))
                    .map(|(&x, &y)| {
                        let t = x as i128 - y as i128;
                        (t * t) as u128
                    })
                    .sum();
                best = best.max(s);
            }
        }
        (best as f64).sqrt()
    }
}
