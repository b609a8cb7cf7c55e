//! Private quantile selection by binary search over noisy prefix counts.

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Noisy interval counts over the integer universe `[0, u]`.
///
/// Implementations hold their own budget accounting; the central counter
/// refuses to answer past its declared query allowance.
pub trait RangeCountOracle {
    /// Upper end `u` of the universe.
    fn universe(&self) -> u128;

    /// Public number of records.
    fn population(&self) -> usize;

    /// Noisy `|D ∩ [lo, hi]|`.
    fn noisy_count(&mut self, lo: u128, hi: u128) -> Result<f64>;

    /// Bound that every answer issued by one binary search stays within,
    /// simultaneously with probability at least `1 - beta`.
    fn rank_error(&self, beta: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileResult {
    pub value: u128,
    pub queries_used: u32,
    pub tau_bound: f64,
}

/// `⌈log₂(u + 1)⌉`: the number of binary-search steps needed on `[0, u]`.
pub fn search_depth(u: u128) -> u32 {
    128 - u.leading_zeros()
}

/// Binary search for the `m`-th smallest value.
///
/// Walks `left = 0, right = u`; at `mid = ⌊(left+right)/2⌋` it asks for the
/// noisy count of `[0, mid]` and moves right when that count is at most `m`.
/// With exact counts the result is the smallest `v` with `|D ∩ [0, v]| ≥ m + 1`.
pub fn priv_quantile<O: RangeCountOracle + ?Sized>(oracle: &mut O, m: usize, beta: f64) -> Result<QuantileResult> {
    if m < 1 || m > oracle.population() {
        return Err(Error::InvalidArgument(format!("rank {m} outside [1, {}]", oracle.population())));
    }
    let (mut left, mut right) = (0u128, oracle.universe());
    let mut queries = 0;
    while left < right {
        let mid = left + (right - left) / 2;
        let c = oracle.noisy_count(0, mid)?;
        queries += 1;
        if c <= m as f64 {
            left = mid + 1;
        } else {
            right = mid;
        }
    }
    Ok(QuantileResult { value: left, queries_used: queries, tau_bound: oracle.rank_error(beta) })
}

/// Rank error `τ` such that all `L = ⌈log₂(u+1)⌉` Gaussian answers with
/// variance `L/(2ρ)` lie within `τ` of the truth with probability `1 - β`.
pub fn rank_error_bound(u: u128, rho: f64, beta: f64) -> f64 {
    let l = search_depth(u).max(1) as f64;
    let sigma = (l / (2.0 * rho)).sqrt();
    sigma * (2.0 * (l / beta).ln()).sqrt()
}

/// `(|{x < v}|, |{x ≤ v}|)` over sorted data: the ranks at which `v` is a
/// correct answer.
pub fn rank_interval(sorted: &[u128], v: u128) -> (usize, usize) {
    (sorted.partition_point(|&x| x < v), sorted.partition_point(|&x| x <= v))
}

/// Distance from `m` to the rank interval of `v`.
pub fn rank_error(sorted: &[u128], v: u128, m: usize) -> usize {
    let (lo, hi) = rank_interval(sorted, v);
    if m < lo {
        lo - m
    } else {
        m.saturating_sub(hi)
    }
}

/// Central-model counter: exact count plus `N(0, L/(2ρ))` per query, with
/// the budget `ρ` split evenly over the `L` allowed queries.
#[derive(Debug, Clone)]
pub struct CentralRangeCounter {
    sorted: Vec<u128>,
    universe: u128,
    max_queries: u32,
    issued: u32,
    std: f64,
    rho_total: f64,
    noise: Stream,
}

/// Builds the central counter over `values ⊆ [0, universe]`.
pub fn central_range_count_oracle(
    mut values: Vec<u128>,
    universe: u128,
    rho_total: f64,
    noise: Stream,
) -> Result<CentralRangeCounter> {
    if !(rho_total > 0.0) {
        return Err(Error::InvalidBudget(format!("rho must be positive, got {rho_total}")));
    }
    if let Some(v) = values.iter().find(|&&v| v > universe) {
        return Err(Error::OutOfRange { value: v.to_string(), range: format!("[0, {universe}]") });
    }
    values.sort_unstable();
    let max_queries = search_depth(universe).max(1);
    let std = if noise.noise_enabled() { (max_queries as f64 / (2.0 * rho_total)).sqrt() } else { 0.0 };
    Ok(CentralRangeCounter { sorted: values, universe, max_queries, issued: 0, std, rho_total, noise })
}

impl CentralRangeCounter {
    pub fn max_queries(&self) -> u32 {
        self.max_queries
    }

    pub fn queries_issued(&self) -> u32 {
        self.issued
    }

    pub fn per_query_rho(&self) -> f64 {
        self.rho_total / self.max_queries as f64
    }

    pub fn noise_std(&self) -> f64 {
        self.std
    }

    pub fn sorted(&self) -> &[u128] {
        &self.sorted
    }
}

impl RangeCountOracle for CentralRangeCounter {
    fn universe(&self) -> u128 {
        self.universe
    }

    fn population(&self) -> usize {
        self.sorted.len()
    }

    fn noisy_count(&mut self, lo: u128, hi: u128) -> Result<f64> {
        if self.issued >= self.max_queries {
            return Err(Error::OracleExhausted { max: self.max_queries });
        }
        self.issued += 1;
        let exact = if lo > hi { 0 } else { rank_interval(&self.sorted, hi).1 - rank_interval(&self.sorted, lo).0 };
        Ok(exact as f64 + self.noise.gaussian_noise(self.std))
    }

    fn rank_error(&self, beta: f64) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            rank_error_bound(self.universe, self.rho_total, beta)
        }
    }
}
