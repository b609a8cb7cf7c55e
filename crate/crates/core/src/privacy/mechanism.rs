use crate::error::{Error, Result};
use crate::rng::Stream;

/// Noise standard deviation of the Gaussian mechanism: `gs / sqrt(2ρ)`.
pub fn gaussian_noise_std(gs: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidBudget(format!("rho must be positive, got {rho}")));
    }
    if !(gs >= 0.0) || !gs.is_finite() {
        return Err(Error::InvalidArgument(format!("sensitivity must be nonnegative, got {gs}")));
    }
    Ok(gs / (2.0 * rho).sqrt())
}

/// ρ-zCDP release of `value` whose ℓ2 global sensitivity is `gs`.
pub fn gaussian_mechanism(value: &[f64], gs: f64, rho: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    let std = gaussian_noise_std(gs, rho)?;
    Ok(value.iter().map(|v| v + rng.gaussian_noise(std)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn zero_sensitivity_is_exact() {
        let mut s = RandomSource::new(3).stream("m");
        let v = vec![1.5, -2.0, 0.25];
        assert_eq!(gaussian_mechanism(&v, 0.0, 0.1, &mut s).unwrap(), v);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut s = RandomSource::new(3).stream("m");
        assert!(gaussian_mechanism(&[0.0], 1.0, 0.0, &mut s).is_err());
        assert!(gaussian_mechanism(&[0.0], -1.0, 1.0, &mut s).is_err());
    }

    #[test]
    fn unit_variance_calibration() {
        // gs = 1, rho = 0.5 gives variance 1
        let mut s = RandomSource::new(11).stream("m");
        let n = 100_000;
        let xs: Vec<f64> =
            (0..n).map(|_| gaussian_mechanism(&[0.0], 1.0, 0.5, &mut s).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn coordinates_uncorrelated() {
        // gs = 2, rho = 2 gives per-coordinate variance 1
        let mut s = RandomSource::new(12).stream("m");
        let n = 100_000;
        let draws: Vec<Vec<f64>> =
            (0..n).map(|_| gaussian_mechanism(&[0.0; 4], 2.0, 2.0, &mut s).unwrap()).collect();
        for a in 0..4 {
            let var = draws.iter().map(|v| v[a] * v[a]).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.03, "var[{a}] {var}");
            for b in (a + 1)..4 {
                let c = draws.iter().map(|v| v[a] * v[b]).sum::<f64>() / n as f64;
                assert!(c.abs() < 0.02, "corr[{a},{b}] {c}");
            }
        }
    }

    #[test]
    fn identical_seeds_identical_outputs() {
        let a = gaussian_mechanism(&[1.0; 8], 3.0, 0.7, &mut RandomSource::new(5).stream("m")).unwrap();
        let b = gaussian_mechanism(&[1.0; 8], 3.0, 0.7, &mut RandomSource::new(5).stream("m")).unwrap();
        assert_eq!(a, b);
    }
}
