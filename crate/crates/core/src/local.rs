//! Local-model mechanisms: per-user Gaussian sum reports, hierarchical
//! histogram reports for range counting, and the three-round pipeline run
//! by an in-process aggregator.

use crate::central::{check_beta, clip_l2, clip_rank_for_offset, median_rank, rotation_offset, shift_rows, MeanEstimate};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, NodeNoise, NoisyHierarchy};
use crate::privacy::{gaussian_noise_std, PrivacyBudget, PrivacyLedger, Share};
use crate::quantile::{priv_quantile, RangeCountOracle};
use crate::rng::{names, RandomSource, Stream};
use crate::transform::{inverse_rotate, rotate_dataset, RotationContext};

/// Largest universe for which per-user hierarchy reports are materialized.
pub const MAX_MATERIALIZED_UNIVERSE: u128 = 1 << 24;

/// One user's noisy vector for the summation round.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSumReport {
    pub noisy_vector: Vec<f64>,
}

/// Gaussian mechanism on a single vector with sensitivity `2C`.
pub fn ldp_sum_randomize(x: &[f64], c: f64, rho: f64, rng: &mut Stream) -> Result<UserSumReport> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > c + 1e-9 * c.max(1.0) {
        return Err(Error::InvalidArgument(format!("report norm {norm} exceeds clipping threshold {c}")));
    }
    let std = gaussian_noise_std(2.0 * c, rho)?;
    Ok(UserSumReport { noisy_vector: x.iter().map(|v| v + rng.gaussian_noise(std)).collect() })
}

/// One user's noisy one-hot vectors, one per hierarchy level below the root.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalReport {
    pub levels: Vec<Vec<f64>>,
}

/// Per-cell noise of a hierarchy report: budget `ρ/L` per level at
/// sensitivity `sqrt(2)`, so variance `L/ρ`.
pub fn hierarchy_cell_std(u: u128, rho: f64) -> Result<f64> {
    let l = Hierarchy::new(u)?.levels() as f64;
    gaussian_noise_std(2f64.sqrt(), rho / l)
}

pub fn ldp_hierarchy_randomize(value: u128, u: u128, rho: f64, rng: &mut Stream) -> Result<HierarchicalReport> {
    if u > MAX_MATERIALIZED_UNIVERSE {
        return Err(Error::InvalidArgument(format!("universe {u} too large for materialized reports")));
    }
    if value > u {
        return Err(Error::OutOfRange { value: value.to_string(), range: format!("[0, {u}]") });
    }
    let shape = Hierarchy::new(u)?;
    let std = hierarchy_cell_std(u, rho)?;
    let levels = (1..=shape.levels())
        .map(|l| {
            let hot = shape.ancestor(value, l);
            (0..shape.cells(l)).map(|k| f64::from(u8::from(k == hot)) + rng.gaussian_noise(std)).collect()
        })
        .collect();
    Ok(HierarchicalReport { levels })
}

/// Reports for a batch of users, user `i` drawing only from its own substream.
pub fn ldp_hierarchy_reports(values: &[u128], u: u128, rho: f64, source: &RandomSource) -> Result<Vec<HierarchicalReport>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ldp_hierarchy_randomize(v, u, rho, &mut source.derive(names::USER, i as u64).stream("hierarchy")))
        .collect()
}

/// Aggregated hierarchy reports answering range-count queries.
#[derive(Debug, Clone)]
pub struct LdpRangeStructure {
    counts: NoisyHierarchy,
    rho: f64,
}

impl LdpRangeStructure {
    pub fn population(&self) -> usize {
        self.counts.population()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn levels(&self) -> u32 {
        self.counts.shape().levels()
    }

    /// Noise standard deviation of one aggregated node count, `sqrt(nL/ρ)`.
    pub fn node_std(&self) -> f64 {
        self.counts.node_noise().variance().sqrt()
    }

    pub fn counts(&self) -> &NoisyHierarchy {
        &self.counts
    }
}

/// Sums per-user reports cell by cell.
pub fn aggregate_hierarchy_reports(reports: &[HierarchicalReport], u: u128, rho: f64, noisy: bool) -> Result<LdpRangeStructure> {
    let shape = Hierarchy::new(u)?;
    let mut levels: Vec<Vec<f64>> = (1..=shape.levels()).map(|l| vec![0.0; shape.cells(l) as usize]).collect();
    for r in reports {
        if r.levels.len() != levels.len() {
            return Err(Error::DimensionMismatch { expected: levels.len(), got: r.levels.len() });
        }
        for (acc, lvl) in levels.iter_mut().zip(&r.levels) {
            if acc.len() != lvl.len() {
                return Err(Error::DimensionMismatch { expected: acc.len(), got: lvl.len() });
            }
            acc.iter_mut().zip(lvl).for_each(|(a, v)| *a += v);
        }
    }
    let std = hierarchy_cell_std(u, rho)? * (reports.len() as f64).sqrt();
    let counts = NoisyHierarchy::from_levels(shape, reports.len(), NodeNoise::Gaussian { std }, noisy, levels)?;
    Ok(LdpRangeStructure { counts, rho })
}

/// The aggregate the server would hold after every user sent a hierarchy
/// report, without materializing the reports: each node count is the exact
/// count plus one `N(0, nL/ρ)` draw, the law of the sum of `n` per-user
/// cell noises. Needed when `u` is too large for `O(u)` reports.
pub fn simulate_ldp_range_structure(values: Vec<u128>, u: u128, rho: f64, source: RandomSource) -> Result<LdpRangeStructure> {
    let std = hierarchy_cell_std(u, rho)? * (values.len() as f64).sqrt();
    let counts = NoisyHierarchy::lazy(values, u, NodeNoise::Gaussian { std }, source)?;
    Ok(LdpRangeStructure { counts, rho })
}

/// Noisy `|D ∩ [a, b]|` from at most two canonical nodes per level.
pub fn ldp_range_query(s: &LdpRangeStructure, a: u128, b: u128) -> Result<f64> {
    s.counts.range_count(a, b)
}

impl RangeCountOracle for LdpRangeStructure {
    fn universe(&self) -> u128 {
        self.counts.universe()
    }

    fn population(&self) -> usize {
        self.counts.population()
    }

    fn noisy_count(&mut self, lo: u128, hi: u128) -> Result<f64> {
        self.counts.range_count(lo, hi)
    }

    fn rank_error(&self, beta: f64) -> f64 {
        self.counts.prefix_search_error(beta)
    }
}

/// Three-round ρ-zCDP local-model mean: per-coordinate medians of the
/// rotated data (ρ/4), a clipping radius from the shifted norms (3ρ/16),
/// and Gaussian sum reports of the clipped shifted vectors (9ρ/16).
pub fn ldp_pipeline(data: &Dataset, rho: f64, beta: f64, source: &RandomSource) -> Result<MeanEstimate> {
    check_beta(beta)?;
    if data.is_signed() {
        return Err(Error::InvalidArgument("the local pipeline expects data in [0, u]".into()));
    }
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    let n = data.n();
    let ctx = RotationContext::new(data.d(), &mut source.stream(names::ROTATION_SIGNS))?;
    let d_pad = ctx.d_pad();
    let rotated = rotate_dataset(&ctx, data)?;
    let offset = rotation_offset(&ctx, data)?;

    let per_dim = Share::of(1, 4).split(d_pad as u64);
    let rho_dim = ledger.rho_of(per_dim)?;
    let mut center = Vec::with_capacity(d_pad);
    for j in 0..d_pad {
        ledger.charge(format!("round 1: median[{j}]"), per_dim)?;
        let column = rotated.rows().map(|r| (r[j] + offset as i64) as u128).collect();
        let mut s = simulate_ldp_range_structure(column, 2 * offset as u128, rho_dim, source.derive("round-1", j as u64))?;
        center.push(priv_quantile(&mut s, median_rank(n), beta / 3.0)?.value as i64 - offset as i64);
    }
    let shifted = shift_rows(&rotated, &center, offset)?;
    let center_f: Vec<f64> = center.iter().map(|&c| c as f64).collect();

    let rho2 = ledger.rho_of(Share::of(3, 16))?;
    let rho3 = ledger.rho_of(Share::of(9, 16))?;
    let mut norms = simulate_ldp_range_structure(shifted.squared_norms(), shifted.squared_norm_universe(), rho2, source.derive("round-2", 0))?;
    let tau = norms.rank_error(beta / 3.0);
    let k = if source.noise_enabled() { (2.0 * d_pad as f64 * n as f64 / rho3).sqrt().max(tau) } else { 0.0 };

    if n as f64 <= k {
        ledger.charge("rounds 2-3: small-n fallback", Share::of(3, 4))?;
        ledger.finalize()?;
        return Ok(MeanEstimate {
            value: inverse_rotate(&ctx, &center_f)?,
            clip_threshold: 0.0,
            clip_rank: 0,
            ledger,
            fallback_zero: true,
            shift: Some(center_f),
        });
    }

    let m = clip_rank_for_offset(n, k);
    ledger.charge("round 2: clip threshold", Share::of(3, 16))?;
    let c = (priv_quantile(&mut norms, m, beta / 3.0)?.value as f64).sqrt();

    ledger.charge("round 3: sum reports", Share::of(9, 16))?;
    let mut acc = vec![0.0; d_pad];
    for (i, row) in shifted.rows().enumerate() {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let report = ldp_sum_randomize(&clip_l2(&x, c), c, rho3, &mut source.derive(names::USER, i as u64).stream("round-3"))?;
        acc.iter_mut().zip(&report.noisy_vector).for_each(|(a, v)| *a += v);
    }
    ledger.finalize()?;
    let recentered: Vec<f64> = acc.iter().zip(&center_f).map(|(s, c)| s / n as f64 + c).collect();
    Ok(MeanEstimate {
        value: inverse_rotate(&ctx, &recentered)?,
        clip_threshold: c,
        clip_rank: m,
        ledger,
        fallback_zero: false,
        shift: Some(center_f),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_report_is_zero() {
        let mut s = RandomSource::new(1).stream("x");
        assert_eq!(ldp_sum_randomize(&[0.0, 0.0], 0.0, 1.0, &mut s).unwrap().noisy_vector, vec![0.0, 0.0]);
        assert!(ldp_sum_randomize(&[3.0, 4.0], 4.0, 1.0, &mut s).is_err());
        assert!(ldp_sum_randomize(&[3.0, 4.0], 5.0, 1.0, &mut s).is_ok());
    }

    #[test]
    fn sum_report_variance() {
        let src = RandomSource::new(2);
        let (c, rho, n) = (3.0, 0.5, 20_000);
        let xs: Vec<f64> = (0..n)
            .map(|i| ldp_sum_randomize(&[1.0], c, rho, &mut src.derive(names::USER, i).stream("s")).unwrap().noisy_vector[0] - 1.0)
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let want = 2.0 * c * c / rho;
        assert!((var / want - 1.0).abs() < 0.04, "{var} vs {want}");
    }

    #[test]
    fn noiseless_path_read_off() {
        let r = ldp_hierarchy_randomize(5, 7, 1.0, &mut RandomSource::new(1).noiseless().stream("h")).unwrap();
        assert_eq!(r.levels, vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]]);
    }

    #[test]
    fn reports_are_local() {
        let src = RandomSource::new(3);
        let values = [4u128, 0, 9, 9, 1];
        let batch = ldp_hierarchy_reports(&values, 12, 2.0, &src).unwrap();
        let alone = ldp_hierarchy_randomize(9, 12, 2.0, &mut src.derive(names::USER, 3).stream("hierarchy")).unwrap();
        assert_eq!(batch[3], alone);
    }

    #[test]
    fn dense_and_lazy_agree_without_noise() {
        let src = RandomSource::new(4).noiseless();
        let values: Vec<u128> = (0..40).map(|i| (i * 7) % 23).collect();
        let reports = ldp_hierarchy_reports(&values, 22, 1.0, &src).unwrap();
        for l in 0..reports[0].levels.len() {
            let total: f64 = reports.iter().map(|r| r.levels[l].iter().sum::<f64>()).sum();
            assert_eq!(total, 40.0);
        }
        let dense = aggregate_hierarchy_reports(&reports, 22, 1.0, false).unwrap();
        let lazy = simulate_ldp_range_structure(values, 22, 1.0, src).unwrap();
        assert_eq!(ldp_range_query(&dense, 0, 22).unwrap(), 40.0);
        for a in 0..=22u128 {
            for b in a..=22 {
                assert_eq!(ldp_range_query(&dense, a, b).unwrap(), ldp_range_query(&lazy, a, b).unwrap());
            }
        }
    }

    #[test]
    fn aggregated_node_variance() {
        let (u, rho, n) = (15u128, 2.0, 400usize);
        let values: Vec<u128> = (0..n as u128).map(|i| i % 16).collect();
        let trials = 600;
        let mut dense = Vec::new();
        let mut lazy = Vec::new();
        for t in 0..trials {
            let src = RandomSource::new(100 + t);
            let reports = ldp_hierarchy_reports(&values, u, rho, &src).unwrap();
            dense.push(ldp_range_query(&aggregate_hierarchy_reports(&reports, u, rho, true).unwrap(), 4, 7).unwrap() - 100.0);
            lazy.push(ldp_range_query(&simulate_ldp_range_structure(values.clone(), u, rho, src).unwrap(), 4, 7).unwrap() - 100.0);
        }
        let want = n as f64 * 4.0 / rho;
        for xs in [dense, lazy] {
            let var = xs.iter().map(|x| x * x).sum::<f64>() / trials as f64;
            // 600 draws: relative standard error of a variance is about 6%
            assert!((var / want - 1.0).abs() < 0.2, "{var} vs {want}");
        }
    }

    #[test]
    fn split_queries_are_consistent_in_mean() {
        let values: Vec<u128> = (0..200).map(|i| (i * 13) % 100).collect();
        let trials = 400;
        let mut acc = 0.0;
        let mut sq = 0.0;
        for t in 0..trials {
            let s = simulate_ldp_range_structure(values.clone(), 99, 1.0, RandomSource::new(t)).unwrap();
            let gap = ldp_range_query(&s, 10, 40).unwrap() + ldp_range_query(&s, 41, 77).unwrap() - ldp_range_query(&s, 10, 77).unwrap();
            acc += gap;
            sq += gap * gap;
        }
        let mean = acc / trials as f64;
        let se = (sq / trials as f64 - mean * mean).sqrt() / (trials as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn noiseless_pipeline_is_exact() {
        let rows: Vec<Vec<i64>> = (0..60).map(|i| vec![i % 9, (i * 5) % 13, 7, i % 2, 3]).collect();
        let ds = Dataset::new(&rows, 15).unwrap();
        let est = ldp_pipeline(&ds, 1.0, 0.1, &RandomSource::new(8).noiseless()).unwrap();
        let truth = ds.mean();
        let err: f64 = est.value.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9, "{err}");
        assert_eq!(est.ledger.entries().len(), 8 + 2);
        est.ledger.finalize().unwrap();
    }

    #[test]
    fn small_n_falls_back() {
        let rows: Vec<Vec<i64>> = (0..20).map(|i| vec![i % 9, 3, 7]).collect();
        let ds = Dataset::new(&rows, 15).unwrap();
        let est = ldp_pipeline(&ds, 1.0, 0.1, &RandomSource::new(8)).unwrap();
        assert!(est.fallback_zero);
        est.ledger.finalize().unwrap();
        let back = inverse_rotate(
            &RotationContext::new(3, &mut RandomSource::new(8).stream(names::ROTATION_SIGNS)).unwrap(),
            est.shift.as_ref().unwrap(),
        )
        .unwrap();
        assert_eq!(est.value, back);
    }
}
