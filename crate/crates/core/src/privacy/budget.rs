use crate::error::{Error, Result};

/// A declared privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivacyBudget {
    /// ρ-zero-concentrated DP.
    Zcdp { rho: f64 },
    /// (ε, δ)-DP.
    ApproxDp { epsilon: f64, delta: f64 },
}

impl PrivacyBudget {
    pub fn zcdp(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidBudget(format!("rho must be positive and finite, got {rho}")));
        }
        Ok(PrivacyBudget::Zcdp { rho })
    }

    pub fn approx_dp(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidBudget(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidBudget(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyBudget::ApproxDp { epsilon, delta })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PrivacyBudget::Zcdp { .. } => "zcdp",
            PrivacyBudget::ApproxDp { .. } => "approx-dp",
        }
    }

    /// Scales every component of the budget by the given factors.
    pub(crate) fn scaled(&self, primary: f64, delta: f64) -> PrivacyBudget {
        match *self {
            PrivacyBudget::Zcdp { rho } => PrivacyBudget::Zcdp { rho: rho * primary },
            PrivacyBudget::ApproxDp { epsilon, delta: d } => {
                PrivacyBudget::ApproxDp { epsilon: epsilon * primary, delta: d * delta }
            }
        }
    }
}

/// The ε for which ρ-zCDP implies (ε, δ)-DP: `ρ + 2·sqrt(ρ·ln(1/δ))`.
pub fn zcdp_to_approx_dp(rho: f64, delta: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidBudget(format!("rho must be positive, got {rho}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidBudget(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

/// Largest ρ whose zCDP guarantee converts to at most (ε, δ)-DP; inverse of
/// [`zcdp_to_approx_dp`].
pub fn zcdp_for_approx_dp(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidBudget(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidBudget(format!("delta must lie in (0, 1), got {delta}")));
    }
    // sqrt(ρ) is the positive root of t² + 2·sqrt(L)·t − ε with L = ln(1/δ).
    let l = (1.0 / delta).ln();
    let t = (l + epsilon).sqrt() - l.sqrt();
    Ok(t * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_values() {
        let e = zcdp_to_approx_dp(0.5, 1e-9).unwrap();
        assert!((e - (0.5 + 2.0 * (0.5 * 1e9f64.ln()).sqrt())).abs() < 1e-12);
        assert!((e - 6.9379).abs() < 1e-3, "{e}");
        let e = zcdp_to_approx_dp(1.0, 1e-6).unwrap();
        assert!((e - 8.4340).abs() < 1e-3, "{e}");
        assert!(zcdp_to_approx_dp(1e-12, 0.1).unwrap() < 1e-5);
    }

    #[test]
    fn conversion_rejects_bad_delta() {
        assert!(zcdp_to_approx_dp(1.0, 0.0).is_err());
        assert!(zcdp_to_approx_dp(1.0, 1.0).is_err());
        assert!(zcdp_to_approx_dp(0.0, 0.5).is_err());
    }

    #[test]
    fn inverse_conversion_round_trips() {
        for &(eps, delta) in &[(1.0, 1e-9), (0.1, 1e-6), (8.0, 0.01)] {
            let rho = zcdp_for_approx_dp(eps, delta).unwrap();
            let back = zcdp_to_approx_dp(rho, delta).unwrap();
            assert!((back - eps).abs() < 1e-9 * eps.max(1.0));
        }
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::zcdp(0.0).is_err());
        assert!(PrivacyBudget::zcdp(-1.0).is_err());
        assert!(PrivacyBudget::approx_dp(1.0, 1.0).is_err());
        assert!(PrivacyBudget::approx_dp(1.0, 0.0).is_ok());
    }
}
