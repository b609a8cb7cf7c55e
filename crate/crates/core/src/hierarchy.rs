//! Binary hierarchy over `[0, u]` with noisy per-node counts, shared by the
//! local and shuffle range-counting structures.
//!
//! Levels run from 1 (two halves) to `L` (leaves), `L = ⌈log₂(u+1)⌉`. The
//! root (level 0) is never randomized: its count is the public population.

use crate::error::{Error, Result};
use crate::quantile::{search_depth, RangeCountOracle};
use crate::rng::{RandomSource, Stream};

/// Largest universe a hierarchy accepts.
pub const MAX_UNIVERSE: u128 = (1 << 62) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hierarchy {
    u: u128,
    levels: u32,
}

/// Node `index` at `level`, covering `[index·2^(L-level), (index+1)·2^(L-level) - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub level: u32,
    pub index: u64,
}

impl Hierarchy {
    pub fn new(u: u128) -> Result<Self> {
        if u > MAX_UNIVERSE {
            return Err(Error::Overflow("hierarchy universe"));
        }
        Ok(Self { u, levels: search_depth(u).max(1) })
    }

    pub fn universe(&self) -> u128 {
        self.u
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Number of cells stored at `level`.
    pub fn cells(&self, level: u32) -> u64 {
        ((self.u >> (self.levels - level)) + 1) as u64
    }

    pub fn ancestor(&self, value: u128, level: u32) -> u64 {
        (value >> (self.levels - level)) as u64
    }

    /// Canonical cover of `[a, b]` by maximal aligned blocks, at most two per
    /// level. A query that reaches `u` is extended to the end of the tree
    /// so that it uses the fewest nodes; blocks beyond `u` are empty and
    /// dropped.
    pub fn canonical_nodes(&self, a: u128, b: u128) -> Result<Vec<Node>> {
        if a > b || b > self.u {
            return Err(Error::OutOfRange { value: format!("[{a}, {b}]"), range: format!("[0, {}]", self.u) });
        }
        if a == 0 && b == self.u {
            return Ok(vec![Node { level: 0, index: 0 }]);
        }
        let top = 1u128 << (self.levels - 1);
        let end = if b == self.u { 1u128 << self.levels } else { b + 1 };
        let mut nodes = Vec::new();
        let mut lo = a;
        while lo < end {
            let mut size = if lo == 0 { top } else { (lo & lo.wrapping_neg()).min(top) };
            while lo + size > end {
                size >>= 1;
            }
            if lo <= self.u {
                let shift = size.trailing_zeros();
                nodes.push(Node { level: self.levels - shift, index: (lo >> shift) as u64 });
            }
            lo += size;
        }
        Ok(nodes)
    }

    fn node_range(&self, node: Node) -> (u128, u128) {
        let shift = self.levels - node.level;
        let lo = (node.index as u128) << shift;
        (lo, lo + (1u128 << shift) - 1)
    }
}

/// Noise carried by one aggregated node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeNoise {
    Gaussian { std: f64 },
    /// `P(k) ∝ p^|k|`.
    DiscreteLaplace { p: f64 },
}

impl NodeNoise {
    pub fn variance(&self) -> f64 {
        match *self {
            NodeNoise::Gaussian { std } => std * std,
            NodeNoise::DiscreteLaplace { p } => 2.0 * p / (1.0 - p).powi(2),
        }
    }

    fn draw(&self, stream: &mut Stream) -> f64 {
        match *self {
            NodeNoise::Gaussian { std } => stream.gaussian_noise(std),
            NodeNoise::DiscreteLaplace { p } => stream.discrete_laplace(p) as f64,
        }
    }

    /// Bound on the sum of `per_query` node errors, simultaneously over
    /// `queries` queries, with probability `1 - beta`.
    pub fn sum_error_bound(&self, per_query: u32, queries: u32, beta: f64) -> f64 {
        let k = per_query as f64;
        let q = queries.max(1) as f64;
        match *self {
            NodeNoise::Gaussian { std } => std * k.sqrt() * (2.0 * (q / beta).ln()).sqrt(),
            NodeNoise::DiscreteLaplace { p } => {
                if p == 0.0 {
                    return 0.0;
                }
                let b = 1.0 / (1.0 / p).ln();
                // every node below its own tail bound
                let per_node = k * b * (2.0 * k * q / beta).ln();
                // Chernoff on the sum, using ln E[e^{λX}] ≤ 2b²λ² for |λ| ≤ 1/(2b)
                let lg = (2.0 * q / beta).ln();
                let summed = if lg <= k / 2.0 { b * (8.0 * k * lg).sqrt() } else { b * (2.0 * lg + k) };
                per_node.min(summed)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Counts {
    Dense(Vec<Vec<f64>>),
    Lazy { sorted: Vec<u128>, source: RandomSource },
}

/// Noisy counts for every node of a [`Hierarchy`].
#[derive(Debug, Clone)]
pub struct NoisyHierarchy {
    shape: Hierarchy,
    population: usize,
    noise: NodeNoise,
    noisy: bool,
    counts: Counts,
}

impl NoisyHierarchy {
    /// Wraps already aggregated per-level counts.
    pub fn from_levels(shape: Hierarchy, population: usize, noise: NodeNoise, noisy: bool, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != shape.levels() as usize {
            return Err(Error::DimensionMismatch { expected: shape.levels() as usize, got: levels.len() });
        }
        for (i, l) in levels.iter().enumerate() {
            let want = shape.cells(i as u32 + 1) as usize;
            if l.len() != want {
                return Err(Error::DimensionMismatch { expected: want, got: l.len() });
            }
        }
        Ok(Self { shape, population, noise, noisy, counts: Counts::Dense(levels) })
    }

    /// Exact counts plus node noise drawn on demand from a per-node seed.
    /// Each node's noise is fixed once the source is fixed, so repeated
    /// queries agree with each other.
    pub fn lazy(mut values: Vec<u128>, u: u128, noise: NodeNoise, source: RandomSource) -> Result<Self> {
        let shape = Hierarchy::new(u)?;
        if let Some(v) = values.iter().find(|&&v| v > u) {
            return Err(Error::OutOfRange { value: v.to_string(), range: format!("[0, {u}]") });
        }
        values.sort_unstable();
        Ok(Self { shape, population: values.len(), noise, noisy: source.noise_enabled(), counts: Counts::Lazy { sorted: values, source } })
    }

    pub fn shape(&self) -> Hierarchy {
        self.shape
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn node_noise(&self) -> NodeNoise {
        self.noise
    }

    pub fn node_count(&self, node: Node) -> f64 {
        if node.level == 0 {
            return self.population as f64;
        }
        match &self.counts {
            Counts::Dense(levels) => levels[node.level as usize - 1][node.index as usize],
            Counts::Lazy { sorted, source } => {
                let (lo, hi) = self.shape.node_range(node);
                let exact = sorted.partition_point(|&x| x <= hi) - sorted.partition_point(|&x| x < lo);
                let mut s = source.derive("level", node.level as u64).derive("node", node.index).stream("count");
                exact as f64 + self.noise.draw(&mut s)
            }
        }
    }

    /// Noisy `|D ∩ [a, b]|` from the canonical cover.
    pub fn range_count(&self, a: u128, b: u128) -> Result<f64> {
        Ok(self.shape.canonical_nodes(a, b)?.into_iter().map(|n| self.node_count(n)).sum())
    }

    /// Rank error of one binary search over prefix queries, each covered by
    /// at most one node per level.
    pub fn prefix_search_error(&self, beta: f64) -> f64 {
        if !self.noisy {
            return 0.0;
        }
        let l = self.shape.levels();
        self.noise.sum_error_bound(l, l, beta)
    }
}

impl RangeCountOracle for NoisyHierarchy {
    fn universe(&self) -> u128 {
        self.shape.universe()
    }

    fn population(&self) -> usize {
        self.population
    }

    fn noisy_count(&mut self, lo: u128, hi: u128) -> Result<f64> {
        self.range_count(lo, hi)
    }

    fn rank_error(&self, beta: f64) -> f64 {
        self.prefix_search_error(beta)
    }
}
