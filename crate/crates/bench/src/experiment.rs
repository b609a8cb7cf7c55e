//! Experiment configuration and the Monte Carlo driver.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use dpmean::central::{
    clipped_mean, clipped_mean_auto, gaussian_grid, gaussian_mean_with, naive_gaussian_mean, naive_gaussian_mean_real,
    optimal_clip_rank, sample_radius, shifted_clipped_mean, CentralEstimator, GaussianBounds,
};
use dpmean::privacy::{zcdp_for_approx_dp, zcdp_to_approx_dp};
use dpmean::rng::names;
use dpmean::transform::quantize;
use dpmean::{clip_l2, ldp_pipeline, shuffle_pipeline, Dataset, RandomSource};
use rayon::prelude::*;

use crate::data::{gen_line, GaussianModel};
use crate::error::BenchError;
use crate::stats::{l2_distance, mean_of, trimmed_mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Central,
    Local,
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    ShiftedCm,
    Cm,
    NaiveGaussian,
    NonPrivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L2,
    Mahalanobis,
}

macro_rules! named {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = BenchError;
            fn from_str(s: &str) -> Result<Self, BenchError> {
                match s {
                    $($s => Ok(Self::$v),)*
                    _ => Err(BenchError::Config(format!("unknown {} {s:?}", stringify!($t).to_lowercase()))),
                }
            }
        }
    };
}

named!(Model { Central => "central", Local => "local", Shuffle => "shuffle" });
named!(Estimator { ShiftedCm => "shifted-cm", Cm => "cm", NaiveGaussian => "naive-gaussian", NonPrivate => "nonprivate" });
named!(Metric { L2 => "l2", Mahalanobis => "mahalanobis" });

#[derive(Debug, Clone)]
pub enum DataSpec {
    /// `N(mu_scale·1, Σ(κ))`; `range_r` defaults to `50√d` (`100√d` when `κ > 1`).
    Gaussian { mu_scale: f64, kappa: f64, range_r: Option<f64> },
    /// `{i·1_d : i = 1..n}`.
    Line,
    /// A fixed integer dataset such as an MNIST digit class.
    Fixed { name: String, data: Arc<Dataset> },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Model,
    pub estimator: Estimator,
    pub n: usize,
    pub d: usize,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub data: DataSpec,
    pub trials: usize,
    pub trim: f64,
    pub seed: u64,
    pub beta: f64,
    pub sigma_min: f64,
}

impl ExperimentConfig {
    pub fn new(model: Model, estimator: Estimator, data: DataSpec) -> Self {
        Self {
            model,
            estimator,
            n: 4000,
            d: 128,
            rho: None,
            epsilon: None,
            delta: 1e-9,
            data,
            trials: 100,
            trim: 0.1,
            seed: 0,
            beta: 0.1,
            sigma_min: 0.1,
        }
    }

    /// `(n, d)` after substituting the shape of a fixed dataset.
    pub fn shape(&self) -> (usize, usize) {
        match &self.data {
            DataSpec::Fixed { data, .. } => (data.n(), data.d()),
            _ => (self.n, self.d),
        }
    }

    /// `(ρ, ε)` with the missing one converted at `δ`; ρ = 0.5 when neither is given.
    pub fn budget(&self) -> Result<(f64, f64), BenchError> {
        match (self.rho, self.epsilon) {
            (Some(_), Some(_)) => Err(BenchError::Config("give either --rho or --eps, not both".into())),
            (Some(rho), None) => Ok((rho, zcdp_to_approx_dp(rho, self.delta)?)),
            (None, Some(eps)) => Ok((zcdp_for_approx_dp(eps, self.delta)?, eps)),
            (None, None) => Ok((0.5, zcdp_to_approx_dp(0.5, self.delta)?)),
        }
    }

    pub fn range_r(&self) -> Option<f64> {
        match self.data {
            DataSpec::Gaussian { kappa, range_r, .. } => {
                Some(range_r.unwrap_or(if kappa > 1.0 { 100.0 } else { 50.0 } * (self.d as f64).sqrt()))
            }
            _ => None,
        }
    }

    pub fn gaussian_bounds(&self) -> Option<GaussianBounds> {
        self.range_r().map(|r| GaussianBounds { range_r: r, sigma_min: self.sigma_min, sigma_max: r / (self.d as f64).sqrt() })
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let cfg = |m: String| Err(BenchError::Config(m));
        if self.trials == 0 {
            return cfg("trials must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.trim) {
            return cfg(format!("trim must lie in [0, 0.5), got {}", self.trim));
        }
        let (n, d) = self.shape();
        if n == 0 || d == 0 {
            return cfg("n and d must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return cfg(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        self.budget()?;
        if self.model != Model::Central && matches!(self.estimator, Estimator::Cm | Estimator::NaiveGaussian) {
            return cfg(format!("estimator {} is only available in the central model", self.estimator));
        }
        if let DataSpec::Gaussian { mu_scale, kappa, .. } = self.data {
            let bounds = self.gaussian_bounds().expect("gaussian data has bounds");
            if !(kappa >= 1.0) {
                return cfg(format!("kappa must be at least 1, got {kappa}"));
            }
            if !(bounds.range_r > 0.0) || mu_scale.abs() * (d as f64).sqrt() > bounds.range_r {
                return cfg(format!("‖μ‖ = {} exceeds R = {}", mu_scale.abs() * (d as f64).sqrt(), bounds.range_r));
            }
            if bounds.sigma_max < kappa.sqrt() || bounds.sigma_max < bounds.sigma_min {
                return cfg(format!("σ_max = R/√d = {} is inconsistent with κ = {kappa}", bounds.sigma_max));
            }
        }
        Ok(())
    }
}

/// One aggregated result line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub model: Model,
    pub estimator: String,
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mu_scale: Option<f64>,
    pub kappa: Option<f64>,
    pub range_r: Option<f64>,
    pub trials: usize,
    pub trim: f64,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
    /// FNV-1a over the bit patterns of the per-trial values.
    pub digest: u64,
}

/// Per-trial error values behind one row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialValues {
    pub row: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub trials: Vec<TrialValues>,
}

pub fn digest(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in values.iter().flat_map(|v| v.to_bits().to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

enum Fixture {
    Gaussian { model: GaussianModel, bounds: GaussianBounds },
    Integer { data: Arc<Dataset>, mean: Vec<f64> },
}

struct TrialError {
    l2: f64,
    mahalanobis: Option<f64>,
}

fn map_values(values: &[f64], grid: &dpmean::transform::QuantizationGrid) -> Vec<f64> {
    values.iter().map(|&v| grid.value(v)).collect()
}

fn estimate_gaussian(cfg: &ExperimentConfig, bounds: &GaussianBounds, samples: &[Vec<f64>], rho: f64, eps: f64, src: &RandomSource) -> Result<Vec<f64>, BenchError> {
    let (n, d) = (samples.len(), cfg.d);
    Ok(match (cfg.model, cfg.estimator) {
        (_, Estimator::NonPrivate) => mean_of(samples),
        (Model::Central, Estimator::ShiftedCm) => gaussian_mean_with(samples, bounds, rho, cfg.beta, CentralEstimator::ShiftedClippedMean, src)?.value,
        (Model::Central, Estimator::Cm) => gaussian_mean_with(samples, bounds, rho, cfg.beta, CentralEstimator::ClippedMean, src)?.value,
        (Model::Central, Estimator::NaiveGaussian) => {
            naive_gaussian_mean_real(samples, sample_radius(bounds, n, d, cfg.beta), rho, src)?.value
        }
        (model, Estimator::ShiftedCm) => {
            let grid = gaussian_grid(bounds, n, d, cfg.beta)?;
            let clipped: Vec<Vec<f64>> = samples.iter().map(|x| clip_l2(x, grid.range_bound())).collect();
            let data = quantize(&clipped, &grid)?;
            let est = if model == Model::Local {
                ldp_pipeline(&data, rho, cfg.beta, src)?
            } else {
                shuffle_pipeline(&data, eps, cfg.delta, cfg.beta, src)?
            };
            map_values(&est.value, &grid)
        }
        (model, est) => return Err(BenchError::Config(format!("estimator {est} is not available in the {model} model"))),
    })
}

fn estimate_integer(cfg: &ExperimentConfig, data: &Dataset, rho: f64, eps: f64, src: &RandomSource) -> Result<Vec<f64>, BenchError> {
    Ok(match (cfg.model, cfg.estimator) {
        (_, Estimator::NonPrivate) => data.mean(),
        (Model::Central, Estimator::ShiftedCm) => shifted_clipped_mean(data, rho, cfg.beta, src)?.value,
        (Model::Central, Estimator::Cm) => clipped_mean_auto(data, rho, cfg.beta, src)?.value,
        (Model::Central, Estimator::NaiveGaussian) => naive_gaussian_mean(data, rho, src)?.value,
        (Model::Local, Estimator::ShiftedCm) => ldp_pipeline(data, rho, cfg.beta, src)?.value,
        (Model::Shuffle, Estimator::ShiftedCm) => shuffle_pipeline(data, eps, cfg.delta, cfg.beta, src)?.value,
        (model, est) => return Err(BenchError::Config(format!("estimator {est} is not available in the {model} model"))),
    })
}

fn run_trial(cfg: &ExperimentConfig, fixture: &Fixture, rho: f64, eps: f64, t: usize) -> Result<TrialError, BenchError> {
    let trial = RandomSource::new(cfg.seed).derive(names::TRIAL, t as u64);
    let mech = trial.derive("mechanism", 0);
    match fixture {
        Fixture::Gaussian { model, bounds } => {
            let samples = model.sample(cfg.n, &mut trial.stream(names::DATA_GENERATION));
            let est = estimate_gaussian(cfg, bounds, &samples, rho, eps, &mech)?;
            Ok(TrialError { l2: l2_distance(&est, model.mu.as_slice()), mahalanobis: Some(model.mahalanobis(&est)) })
        }
        Fixture::Integer { data, mean } => {
            let est = estimate_integer(cfg, data, rho, eps, &mech)?;
            Ok(TrialError { l2: l2_distance(&est, mean), mahalanobis: None })
        }
    }
}

fn row(cfg: &ExperimentConfig, estimator: String, rho: f64, eps: f64, metric: Metric, values: &[f64]) -> Result<ExperimentRow, BenchError> {
    let (n, d) = cfg.shape();
    let (mu_scale, kappa) = match cfg.data {
        DataSpec::Gaussian { mu_scale, kappa, .. } => (Some(mu_scale), Some(kappa)),
        _ => (None, None),
    };
    Ok(ExperimentRow {
        model: cfg.model,
        estimator,
        n,
        d,
        rho,
        epsilon: eps,
        delta: cfg.delta,
        mu_scale,
        kappa,
        range_r: cfg.range_r(),
        trials: cfg.trials,
        trim: cfg.trim,
        seed: cfg.seed,
        metric,
        value: trimmed_mean(values, cfg.trim)?,
        digest: digest(values),
    })
}

/// Runs every trial (in parallel, collected in trial order) and aggregates
/// each metric by its trimmed mean.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    cfg.validate()?;
    let (rho, eps) = cfg.budget()?;
    let fixture = match &cfg.data {
        DataSpec::Gaussian { mu_scale, kappa, .. } => {
            let mut s = RandomSource::new(cfg.seed).stream("gaussian-model");
            let model = GaussianModel::new(vec![*mu_scale; cfg.d], *kappa, &mut s)?;
            Fixture::Gaussian { model, bounds: cfg.gaussian_bounds().expect("gaussian data has bounds") }
        }
        DataSpec::Line => {
            let data = Arc::new(gen_line(cfg.n, cfg.d));
            let mean = data.mean();
            Fixture::Integer { data, mean }
        }
        DataSpec::Fixed { data, .. } => Fixture::Integer { data: data.clone(), mean: data.mean() },
    };
    let results: Vec<TrialError> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &fixture, rho, eps, t)).collect::<Result<_, _>>()?;

    let mut out = ExperimentOutput { rows: Vec::new(), trials: Vec::new() };
    let l2: Vec<f64> = results.iter().map(|r| r.l2).collect();
    out.rows.push(row(cfg, cfg.estimator.to_string(), rho, eps, Metric::L2, &l2)?);
    out.trials.push(TrialValues { row: 0, values: l2 });
    if let Some(mh) = results.iter().map(|r| r.mahalanobis).collect::<Option<Vec<f64>>>() {
        out.rows.push(row(cfg, cfg.estimator.to_string(), rho, eps, Metric::Mahalanobis, &mh)?);
        out.trials.push(TrialValues { row: 1, values: mh });
    }
    Ok(out)
}

/// One point of a clipping-rank sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub rank: usize,
    pub chosen: bool,
    pub errors: Vec<f64>,
    pub trimmed: f64,
}

/// Clipped mean on `data` at the exact norm order statistic of each rank in
/// `ranks`, plus the rank `n - ⌈sqrt(2d/ρ)⌉`, full budget `ρ` each.
pub fn sweep_clip_ranks(data: &Dataset, ranks: &[usize], rho: f64, trials: usize, trim: f64, seed: u64) -> Result<Vec<SweepPoint>, BenchError> {
    let mut norms: Vec<f64> = data.squared_norms().into_iter().map(|s| (s as f64).sqrt()).collect();
    norms.sort_by(f64::total_cmp);
    let truth = data.mean();
    let chosen = optimal_clip_rank(data.n(), data.d(), rho, 0.0);
    let mut all: Vec<(usize, bool)> = ranks.iter().map(|&r| (r, false)).collect();
    all.push((chosen, true));
    all.into_iter()
        .map(|(rank, is_chosen)| {
            if rank == 0 || rank > data.n() {
                return Err(BenchError::Config(format!("rank {rank} outside [1, {}]", data.n())));
            }
            let c = norms[rank - 1];
            let errors: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let src = RandomSource::new(seed).derive(names::TRIAL, t as u64).derive("rank", rank as u64);
                    let est = if c > 0.0 { clipped_mean(data, c, rho, &src)?.value } else { vec![0.0; data.d()] };
                    Ok(l2_distance(&est, &truth))
                })
                .collect::<Result<_, BenchError>>()?;
            let trimmed = trimmed_mean(&errors, trim)?;
            Ok(SweepPoint { rank, chosen: is_chosen, errors, trimmed })
        })
        .collect()
}

/// `points` ranks spread evenly up to `n`.
pub fn sweep_ranks(n: usize, points: usize) -> Vec<usize> {
    (1..=points).map(|k| (n * k).div_ceil(points).max(1)).collect()
}

/// Sweep over `gen_line(n, d)` as result rows, one per rank.
pub fn run_quantile_sweep(cfg: &ExperimentConfig, points: usize) -> Result<ExperimentOutput, BenchError> {
    cfg.validate()?;
    let (rho, eps) = cfg.budget()?;
    let data = match &cfg.data {
        DataSpec::Fixed { data, .. } => data.clone(),
        _ => Arc::new(gen_line(cfg.n, cfg.d)),
    };
    let sweep = sweep_clip_ranks(&data, &sweep_ranks(data.n(), points), rho, cfg.trials, cfg.trim, cfg.seed)?;
    let mut out = ExperimentOutput { rows: Vec::new(), trials: Vec::new() };
    for (i, p) in sweep.into_iter().enumerate() {
        let name = if p.chosen { format!("cm-chosen-rank-{}", p.rank) } else { format!("cm-rank-{}", p.rank) };
        let mut r = row(cfg, name, rho, eps, Metric::L2, &p.errors)?;
        r.value = p.trimmed;
        out.rows.push(r);
        out.trials.push(TrialValues { row: i, values: p.errors });
    }
    Ok(out)
}
