//! Interactive operations for the static demo page in `www/`.

use dpmean::central::{error_functional, gaussian_mean_with, optimal_clip_rank, CentralEstimator, GaussianBounds};
use dpmean::rng::{names, RandomSource};
use dpmean::transform::{rotate_real, RotationContext};
use dpmean::{Dataset, Error, Result};
use wasm_bindgen::prelude::*;

/// Error functional at every norm order statistic of the line dataset
/// `{i·1_d}`, followed by the chosen rank `n - ⌈sqrt(2d/ρ)⌉`.
pub fn clip_curve(n: usize, d: usize, rho: f64) -> Result<Vec<f64>> {
    if n == 0 || d == 0 || n > 5000 || d > 4096 {
        return Err(Error::InvalidArgument("need 1 <= n <= 5000 and 1 <= d <= 4096".into()));
    }
    let flat = (1..=n as i64).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    let data = Dataset::from_flat(flat, d, n as u64)?;
    let mut curve: Vec<f64> = (1..=n).map(|i| error_functional(&data, i as f64 * (d as f64).sqrt(), rho)).collect();
    curve.push(optimal_clip_rank(n, d, rho, 0.0) as f64);
    Ok(curve)
}

/// `[shifted, unshifted]` ℓ2 errors of the central estimators on `n`
/// samples from `N(mu·1, I)`.
pub fn translation_errors(n: usize, d: usize, mu: f64, rho: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 2 || d == 0 || n > 20_000 || d > 256 {
        return Err(Error::InvalidArgument("need 2 <= n <= 20000 and 1 <= d <= 256".into()));
    }
    let src = RandomSource::new(seed);
    let mut g = src.stream(names::DATA_GENERATION);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| mu + g.gaussian_noise(1.0)).collect()).collect();
    let bounds = GaussianBounds { range_r: (mu.abs() * (d as f64).sqrt()).max(1.0) * 2.0, sigma_min: 0.5, sigma_max: 1.0 };
    let truth = vec![mu; d];
    let err = |v: &[f64]| v.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let shifted = gaussian_mean_with(&xs, &bounds, rho, 0.1, CentralEstimator::ShiftedClippedMean, &src)?;
    let plain = gaussian_mean_with(&xs, &bounds, rho, 0.1, CentralEstimator::ClippedMean, &src)?;
    Ok(vec![err(&shifted.value), err(&plain.value)])
}

/// Randomized Hadamard rotation of `x`, scaled to preserve the norm.
pub fn rotation_spread(x: &[f64], seed: u64) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() > 4096 {
        return Err(Error::InvalidArgument("need between 1 and 4096 coordinates".into()));
    }
    let ctx = RotationContext::new(x.len(), &mut RandomSource::new(seed).stream(names::ROTATION_SIGNS))?;
    let scale = (ctx.d_pad() as f64).sqrt();
    Ok(rotate_real(&ctx, x)?.into_iter().map(|v| v / scale).collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = clipCurve)]
pub fn clip_curve_js(n: usize, d: usize, rho: f64) -> std::result::Result<Vec<f64>, JsError> {
    clip_curve(n, d, rho).map_err(js)
}

#[wasm_bindgen(js_name = translationErrors)]
pub fn translation_errors_js(n: usize, d: usize, mu: f64, rho: f64, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
    translation_errors(n, d, mu, rho, seed).map_err(js)
}

#[wasm_bindgen(js_name = rotationSpread)]
pub fn rotation_spread_js(x: Vec<f64>, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
    rotation_spread(&x, seed).map_err(js)
}
