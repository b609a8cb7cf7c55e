//! Central-model estimators: the clipped mean, its private clipping
//! threshold, the rotate-and-shift pipeline and the Gaussian wrapper.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::privacy::{gaussian_noise_std, PrivacyBudget, PrivacyLedger, Share};
use crate::quantile::{central_range_count_oracle, priv_quantile, rank_error_bound};
use crate::rng::{names, RandomSource, Stream};
use crate::transform::{inverse_rotate, quantize, rotate_dataset, QuantizationGrid, RotationContext};

/// A released mean together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub value: Vec<f64>,
    /// Clipping radius used by the summation stage (in that stage's frame).
    pub clip_threshold: f64,
    /// Rank whose norm quantile was requested for the clipping radius.
    pub clip_rank: usize,
    pub ledger: PrivacyLedger,
    /// The summation stage skipped the data and returned zero in its own
    /// frame. For shifted pipelines `value` is then the back-projected shift.
    pub fallback_zero: bool,
    /// Approximate center subtracted before clipping, in rotated coordinates.
    pub shift: Option<Vec<f64>>,
}

/// Scales `x` by `min{C/‖x‖₂, 1}`.
pub fn clip_l2(x: &[f64], c: f64) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= c || norm == 0.0 {
        x.to_vec()
    } else {
        let s = c / norm;
        x.iter().map(|v| v * s).collect()
    }
}

fn clipped_sum(data: &Dataset, c: f64) -> Vec<f64> {
    let mut acc = vec![0.0; data.d()];
    for (row, sq) in data.rows().zip(data.squared_norms()) {
        let norm = (sq as f64).sqrt();
        let s = if norm <= c || norm == 0.0 { 1.0 } else { c / norm };
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64 * s;
        }
    }
    acc
}

/// Mean of `C`-clipped rows plus Gaussian noise at sensitivity `2C/n`.
fn clipped_mean_with(data: &Dataset, c: f64, rho: f64, noise: &mut Stream) -> Result<Vec<f64>> {
    let n = data.n() as f64;
    let std = gaussian_noise_std(2.0 * c / n, rho)?;
    Ok(clipped_sum(data, c).into_iter().map(|s| s / n + noise.gaussian_noise(std)).collect())
}

/// ρ-zCDP clipped mean with a fixed radius `C`.
pub fn clipped_mean(data: &Dataset, c: f64, rho: f64, source: &RandomSource) -> Result<MeanEstimate> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("clipping threshold must be positive, got {c}")));
    }
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    ledger.charge("clipped mean", Share::whole())?;
    let value = clipped_mean_with(data, c, rho, &mut source.stream(names::MECHANISM_NOISE))?;
    ledger.finalize()?;
    Ok(MeanEstimate { value, clip_threshold: c, clip_rank: 0, ledger, fallback_zero: false, shift: None })
}

/// Upper bound on the expected ℓ2 error of the clipped mean:
/// `(1/n)·Σ max{‖x_i‖ − C, 0} + (C/n)·sqrt(2d/ρ)`.
pub fn error_functional(data: &Dataset, c: f64, rho: f64) -> f64 {
    let norms: Vec<f64> = data.squared_norms().into_iter().map(|s| (s as f64).sqrt()).collect();
    error_functional_norms(&norms, data.d(), c, rho)
}

/// [`error_functional`] over precomputed norms.
pub fn error_functional_norms(norms: &[f64], d: usize, c: f64, rho: f64) -> f64 {
    let n = norms.len() as f64;
    let bias: f64 = norms.iter().map(|x| (x - c).max(0.0)).sum();
    bias / n + c / n * (2.0 * d as f64 / rho).sqrt()
}

/// `max{n − ⌈max{sqrt(2d/ρ), τ}⌉, 1}`.
pub fn optimal_clip_rank(n: usize, d: usize, rho: f64, tau: f64) -> usize {
    clip_rank_for_offset(n, (2.0 * d as f64 / rho).sqrt().max(tau))
}

pub(crate) fn clip_rank_for_offset(n: usize, offset: f64) -> usize {
    let k = offset.ceil();
    if k >= n as f64 {
        1
    } else {
        (n - k as usize).max(1)
    }
}

/// Square root of the private `m`-th quantile of the squared norms, with
/// budget `rho_q` spread over the binary search.
pub fn clip_threshold_at_rank(data: &Dataset, m: usize, rho_q: f64, noise: Stream) -> Result<f64> {
    let mut oracle = central_range_count_oracle(data.squared_norms(), data.squared_norm_universe(), rho_q, noise)?;
    let q = priv_quantile(&mut oracle, m, 0.5)?;
    Ok((q.value as f64).sqrt())
}

/// Private clipping radius and the rank it targets.
///
/// `rho_q` is spent on the quantile search; `rho_sum` is the budget the
/// clipped mean will run with and fixes the noise term of the target rank.
pub fn private_clip_threshold(
    data: &Dataset,
    rho_q: f64,
    rho_sum: f64,
    beta: f64,
    noise: Stream,
) -> Result<(f64, usize)> {
    let tau = if noise.noise_enabled() { rank_error_bound(data.squared_norm_universe(), rho_q, beta) } else { 0.0 };
    let m = if noise.noise_enabled() { optimal_clip_rank(data.n(), data.d(), rho_sum, tau) } else { data.n() };
    Ok((clip_threshold_at_rank(data, m, rho_q, noise)?, m))
}

struct StageOutput {
    value: Vec<f64>,
    clip_threshold: f64,
    clip_rank: usize,
    fallback_zero: bool,
}

/// Threshold selection with a quarter of `share`, clipped mean with the rest.
fn clipped_mean_auto_stage(
    data: &Dataset,
    ledger: &mut PrivacyLedger,
    share: Share,
    beta: f64,
    source: &RandomSource,
) -> Result<StageOutput> {
    let rho = ledger.rho_of(share)?;
    let noisy = source.noise_enabled();
    let rho_q = rho / 4.0;
    let tau = if noisy { rank_error_bound(data.squared_norm_universe(), rho_q, beta) } else { 0.0 };
    let offset = if noisy { (2.0 * data.d() as f64 / rho).sqrt().max(tau) } else { 0.0 };

    // decided from public n, d, ρ, τ only
    if data.n() as f64 <= offset {
        ledger.charge("clipped mean: small-n fallback", share)?;
        return Ok(StageOutput { value: vec![0.0; data.d()], clip_threshold: 0.0, clip_rank: 0, fallback_zero: true });
    }

    let m = clip_rank_for_offset(data.n(), offset);
    ledger.charge("clip threshold quantile", Share::of(1, 4).within(share))?;
    let c = clip_threshold_at_rank(data, m, rho_q, source.stream("clip-threshold"))?;

    let rho_sum = ledger.rho_of(Share::of(3, 4).within(share))?;
    ledger.charge("clipped mean", Share::of(3, 4).within(share))?;
    let value = if c == 0.0 {
        vec![0.0; data.d()]
    } else {
        clipped_mean_with(data, c, rho_sum, &mut source.stream(names::MECHANISM_NOISE))?
    };
    Ok(StageOutput { value, clip_threshold: c, clip_rank: m, fallback_zero: false })
}

/// ρ-zCDP clipped mean whose radius is a private norm quantile chosen to
/// balance clipping bias against noise.
pub fn clipped_mean_auto(data: &Dataset, rho: f64, beta: f64, source: &RandomSource) -> Result<MeanEstimate> {
    check_beta(beta)?;
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    let out = clipped_mean_auto_stage(data, &mut ledger, Share::whole(), beta, source)?;
    ledger.finalize()?;
    Ok(MeanEstimate {
        value: out.value,
        clip_threshold: out.clip_threshold,
        clip_rank: out.clip_rank,
        ledger,
        fallback_zero: out.fallback_zero,
        shift: None,
    })
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// Rotated dataset, its approximate per-coordinate medians and the data
/// shifted by them.
pub(crate) struct ShiftFrame {
    pub ctx: RotationContext,
    pub center: Vec<i64>,
    pub shifted: Dataset,
}

/// Offset that maps rotated coordinates `[-d_pad·u, d_pad·u]` onto `[0, 2·d_pad·u]`.
pub(crate) fn rotation_offset(ctx: &RotationContext, data: &Dataset) -> Result<u64> {
    (ctx.d_pad() as u64).checked_mul(data.bound()).ok_or(Error::Overflow("rotation offset"))
}

/// Subtracts `center` from every rotated row.
pub(crate) fn shift_rows(rotated: &Dataset, center: &[i64], offset: u64) -> Result<Dataset> {
    let mut flat = Vec::with_capacity(rotated.as_flat().len());
    for r in rotated.rows() {
        flat.extend(r.iter().zip(center).map(|(x, c)| x - c));
    }
    let bound = offset.checked_mul(2).ok_or(Error::Overflow("shifted bound"))?;
    Dataset::signed(flat, rotated.d(), bound)
}

/// The median rank used for centering.
pub(crate) fn median_rank(n: usize) -> usize {
    n.div_ceil(2)
}

fn central_shift(
    data: &Dataset,
    ledger: &mut PrivacyLedger,
    share: Share,
    source: &RandomSource,
) -> Result<ShiftFrame> {
    if data.is_signed() {
        return Err(Error::InvalidArgument("the shifted pipeline expects data in [0, u]".into()));
    }
    let ctx = RotationContext::new(data.d(), &mut source.stream(names::ROTATION_SIGNS))?;
    let rotated = rotate_dataset(&ctx, data)?;
    let offset = rotation_offset(&ctx, data)?;
    let universe = 2 * offset as u128;
    let d_pad = ctx.d_pad();
    let per_dim = share.split(d_pad as u64);
    let rho_dim = ledger.rho_of(per_dim)?;
    let m = median_rank(data.n());

    let mut center = Vec::with_capacity(d_pad);
    for j in 0..d_pad {
        let column: Vec<u128> = rotated.rows().map(|r| (r[j] + offset as i64) as u128).collect();
        ledger.charge(format!("median[{j}]"), per_dim)?;
        let noise = source.derive("median", j as u64).stream(names::MECHANISM_NOISE);
        let mut oracle = central_range_count_oracle(column, universe, rho_dim, noise)?;
        let q = priv_quantile(&mut oracle, m, 0.5)?;
        center.push(q.value as i64 - offset as i64);
    }
    let shifted = shift_rows(&rotated, &center, offset)?;
    Ok(ShiftFrame { ctx, center, shifted })
}

/// The full central pipeline: random rotation, per-coordinate private
/// medians with a quarter of the budget, then [`clipped_mean_auto`] on the
/// centered data with the remaining three quarters.
pub fn shifted_clipped_mean(data: &Dataset, rho: f64, beta: f64, source: &RandomSource) -> Result<MeanEstimate> {
    check_beta(beta)?;
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    let frame = central_shift(data, &mut ledger, Share::of(1, 4), source)?;
    // β is split evenly over the rotation tail, the medians and the clip stage
    let stage = clipped_mean_auto_stage(&frame.shifted, &mut ledger, Share::of(3, 4), beta / 3.0, &source.derive("clip-stage", 0))?;
    ledger.finalize()?;

    let center: Vec<f64> = frame.center.iter().map(|&c| c as f64).collect();
    let recentered: Vec<f64> = stage.value.iter().zip(&center).map(|(y, c)| y + c).collect();
    let value = inverse_rotate(&frame.ctx, &recentered)?;
    Ok(MeanEstimate {
        value,
        clip_threshold: stage.clip_threshold,
        clip_rank: stage.clip_rank,
        ledger,
        fallback_zero: stage.fallback_zero,
        shift: Some(center),
    })
}

/// A-priori bounds for Gaussian data: `‖μ‖₂ ≤ R` and
/// `σ_min² I ⪯ Σ ⪯ σ_max² I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBounds {
    pub range_r: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Which central estimator runs on the quantized samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralEstimator {
    /// Rotate, center on private medians, then clip.
    ShiftedClippedMean,
    /// Clip around the origin without shifting.
    ClippedMean,
}

/// `R' = R + 2·σ_max·sqrt(d + ln(4n/β))`: radius that holds every sample
/// with probability `1 - β/4`.
pub fn sample_radius(bounds: &GaussianBounds, n: usize, d: usize, beta: f64) -> f64 {
    bounds.range_r + 2.0 * bounds.sigma_max * (d as f64 + (4.0 * n as f64 / beta).ln()).sqrt()
}

/// Grid with bucket `α/sqrt(d)`, `α = σ_min·sqrt(d/n)`, over `[-R', R']`.
pub fn gaussian_grid(bounds: &GaussianBounds, n: usize, d: usize, beta: f64) -> Result<QuantizationGrid> {
    let alpha = bounds.sigma_min * (d as f64 / n as f64).sqrt();
    QuantizationGrid::new(sample_radius(bounds, n, d, beta), alpha, d)
}

fn validate_bounds(bounds: &GaussianBounds) -> Result<()> {
    if bounds.range_r > 0.0 && bounds.sigma_min > 0.0 && bounds.sigma_max >= bounds.sigma_min {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid Gaussian bounds {bounds:?}")))
    }
}

/// ρ-zCDP estimate of the mean of i.i.d. Gaussian samples: clip each sample
/// to the `R'` ball, quantize, run the shifted clipped mean, map back.
pub fn gaussian_mean(
    samples: &[Vec<f64>],
    bounds: &GaussianBounds,
    rho: f64,
    beta: f64,
    source: &RandomSource,
) -> Result<MeanEstimate> {
    gaussian_mean_with(samples, bounds, rho, beta, CentralEstimator::ShiftedClippedMean, source)
}

/// [`gaussian_mean`] with a choice of the estimator that runs on the grid.
pub fn gaussian_mean_with(
    samples: &[Vec<f64>],
    bounds: &GaussianBounds,
    rho: f64,
    beta: f64,
    estimator: CentralEstimator,
    source: &RandomSource,
) -> Result<MeanEstimate> {
    validate_bounds(bounds)?;
    check_beta(beta)?;
    let n = samples.len();
    let d = samples.first().map(|r| r.len()).ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let grid = gaussian_grid(bounds, n, d, beta)?;
    let clipped: Vec<Vec<f64>> = samples.iter().map(|x| clip_l2(x, grid.range_bound())).collect();
    let data = quantize(&clipped, &grid)?;

    let mut est = match estimator {
        CentralEstimator::ShiftedClippedMean => shifted_clipped_mean(&data, rho, beta, source)?,
        CentralEstimator::ClippedMean => {
            // index whose grid point is closest to the origin
            let zero = grid.index(0.0)?;
            let flat: Vec<i64> = data.as_flat().iter().map(|&i| i - zero).collect();
            let bound = (zero as u64).max(grid.universe() - zero as u64);
            let centered = Dataset::signed(flat, d, bound)?;
            let mut est = clipped_mean_auto(&centered, rho, beta, source)?;
            est.value.iter_mut().for_each(|v| *v += zero as f64);
            est
        }
    };
    est.value = est.value.iter().map(|&i| grid.value(i)).collect();
    Ok(est)
}

/// Baseline: Gaussian mechanism on the plain mean of `[0, u]^d` (or
/// `[-b, b]^d`) data, with worst-case sensitivity.
pub fn naive_gaussian_mean(data: &Dataset, rho: f64, source: &RandomSource) -> Result<MeanEstimate> {
    let side = if data.is_signed() { 2.0 * data.bound() as f64 } else { data.bound() as f64 };
    let gs = side * (data.d() as f64).sqrt() / data.n() as f64;
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    ledger.charge("naive gaussian", Share::whole())?;
    let value = crate::privacy::gaussian_mechanism(&data.mean(), gs, rho, &mut source.stream(names::MECHANISM_NOISE))?;
    ledger.finalize()?;
    Ok(MeanEstimate { value, clip_threshold: f64::INFINITY, clip_rank: 0, ledger, fallback_zero: false, shift: None })
}

/// Baseline for real samples: clip to a public radius and add noise at
/// sensitivity `2·radius/n`.
pub fn naive_gaussian_mean_real(samples: &[Vec<f64>], radius: f64, rho: f64, source: &RandomSource) -> Result<MeanEstimate> {
    let n = samples.len();
    let d = samples.first().map(|r| r.len()).ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let mut mean = vec![0.0; d];
    for x in samples {
        for (m, v) in mean.iter_mut().zip(clip_l2(x, radius)) {
            *m += v / n as f64;
        }
    }
    let mut ledger = PrivacyLedger::new(PrivacyBudget::zcdp(rho)?);
    ledger.charge("naive gaussian", Share::whole())?;
    let value = crate::privacy::gaussian_mechanism(&mean, 2.0 * radius / n as f64, rho, &mut source.stream(names::MECHANISM_NOISE))?;
    ledger.finalize()?;
    Ok(MeanEstimate { value, clip_threshold: radius, clip_rank: n, ledger, fallback_zero: false, shift: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn clip_read_offs() {
        assert_eq!(clip_l2(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
        assert_eq!(clip_l2(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        assert_eq!(clip_l2(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(clip_l2(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn clipped_mean_noiseless() {
        let src = RandomSource::new(1).noiseless();
        let ds = Dataset::new(&[vec![0, 0], vec![3, 4]], 10).unwrap();
        assert_eq!(clipped_mean(&ds, 2.5, 1.0, &src).unwrap().value, vec![0.75, 1.0]);
        assert_eq!(clipped_mean(&ds, 5.0, 1.0, &src).unwrap().value, vec![1.5, 2.0]);
        assert!(clipped_mean(&ds, 0.0, 1.0, &src).is_err());
    }

    #[test]
    fn error_functional_edges() {
        let ds = Dataset::new(&[vec![0, 0], vec![3, 4], vec![6, 8]], 10).unwrap();
        assert!((error_functional(&ds, 0.0, 1.0) - 5.0).abs() < 1e-12);
        let slope = (2.0f64 * 2.0).sqrt() / 3.0;
        assert!((error_functional(&ds, 10.0, 1.0) - 10.0 * slope).abs() < 1e-12);
        assert!((error_functional(&ds, 20.0, 1.0) - 20.0 * slope).abs() < 1e-12);
    }

    #[test]
    fn optimal_rank_examples() {
        assert_eq!(optimal_clip_rank(100, 2, 1.0, 1.0), 98);
        assert_eq!(optimal_clip_rank(5, 1000, 0.01, 0.0), 1);
        assert_eq!(optimal_clip_rank(5, 1000, 0.01, 1e9), 1);
        assert_eq!(optimal_clip_rank(500, 128, 0.5, 0.1), 477);
    }

    #[test]
    fn threshold_trace() {
        // squared norms 1, 4, 9, 16, 25
        let ds = Dataset::new(&[vec![1, 0], vec![2, 0], vec![3, 0], vec![4, 0], vec![5, 0]], 5).unwrap();
        let c = clip_threshold_at_rank(&ds, 4, 1.0, RandomSource::new(0).noiseless().stream("q")).unwrap();
        assert_eq!(c, 5.0);
        let single = Dataset::new(&[vec![3, 4]], 5).unwrap();
        let (c, m) = private_clip_threshold(&single, 1.0, 1.0, 0.1, RandomSource::new(0).noiseless().stream("q")).unwrap();
        assert_eq!((c, m), (50f64.sqrt(), 1));
        assert!(c >= 5.0);
    }

    #[test]
    fn small_n_falls_back() {
        let rows: Vec<Vec<i64>> = vec![vec![3; 100]];
        let ds = Dataset::new(&rows, 10).unwrap();
        let est = clipped_mean_auto(&ds, 0.01, 0.1, &RandomSource::new(4)).unwrap();
        assert!(est.fallback_zero);
        assert_eq!(est.value, vec![0.0; 100]);
        est.ledger.finalize().unwrap();
    }

    #[test]
    fn noiseless_auto_is_exact() {
        let rows: Vec<Vec<i64>> = (0..50).map(|i| vec![i % 7, (i * 3) % 11, 5]).collect();
        let ds = Dataset::new(&rows, 12).unwrap();
        let est = clipped_mean_auto(&ds, 1.0, 0.1, &RandomSource::new(4).noiseless()).unwrap();
        assert!(!est.fallback_zero);
        assert!(l2(&est.value, &ds.mean()) < 1e-12);
    }

    #[test]
    fn noiseless_shifted_is_exact() {
        let rows: Vec<Vec<i64>> = (0..40).map(|i| vec![i % 9, (i * 5) % 13, 7, i % 2, 3]).collect();
        let ds = Dataset::new(&rows, 15).unwrap();
        let est = shifted_clipped_mean(&ds, 1.0, 0.1, &RandomSource::new(8).noiseless()).unwrap();
        let truth = ds.mean();
        assert!(l2(&est.value, &truth) <= 1e-9 * truth.iter().map(|v| v * v).sum::<f64>().sqrt());
        assert_eq!(est.ledger.entries().len(), 8 + 2);
        est.ledger.finalize().unwrap();
    }

    #[test]
    fn sample_radius_value() {
        let b = GaussianBounds { range_r: 10.0, sigma_min: 0.1, sigma_max: 1.0 };
        let r = sample_radius(&b, 100, 16, 0.1);
        assert!((r - (10.0 + 2.0 * (16.0 + 4000f64.ln()).sqrt())).abs() < 1e-12);
        assert!((r - 19.858).abs() < 1e-3, "{r}");
    }

    #[test]
    fn degenerate_gaussian_noiseless() {
        let mu = vec![1.5, -2.0, 0.3];
        let samples = vec![mu.clone(); 200];
        let b = GaussianBounds { range_r: 5.0, sigma_min: 0.1, sigma_max: 0.1 };
        let grid = gaussian_grid(&b, 200, 3, 0.1).unwrap();
        let est = gaussian_mean(&samples, &b, 0.5, 0.1, &RandomSource::new(2).noiseless()).unwrap();
        assert!(l2(&est.value, &mu) <= grid.bucket() * (3f64).sqrt() / 2.0 + 1e-9);
    }
}
