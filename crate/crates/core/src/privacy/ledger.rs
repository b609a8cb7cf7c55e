use num_rational::Ratio;

use super::PrivacyBudget;
use crate::error::{Error, Result};

/// An exact fraction of the declared budget.
///
/// `primary` is the fraction of ρ (zCDP) or ε (approximate DP); `delta` is
/// the fraction of δ and is ignored for zCDP ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub primary: Ratio<u64>,
    pub delta: Ratio<u64>,
}

impl Share {
    pub fn new(primary: Ratio<u64>, delta: Ratio<u64>) -> Self {
        Self { primary, delta }
    }

    /// `num/den` of the primary parameter, and the same fraction of δ.
    pub fn of(num: u64, den: u64) -> Self {
        let r = Ratio::new(num, den);
        Self { primary: r, delta: r }
    }

    pub fn whole() -> Self {
        Self::of(1, 1)
    }

    pub fn zero() -> Self {
        Self::of(0, 1)
    }

    /// This share taken of a sub-budget that is itself `outer` of the whole.
    pub fn within(self, outer: Share) -> Share {
        Share { primary: self.primary * outer.primary, delta: self.delta * outer.delta }
    }

    /// Splits into `parts` equal shares.
    pub fn split(self, parts: u64) -> Share {
        Share { primary: self.primary / parts, delta: self.delta / parts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub label: String,
    pub share: Share,
    pub cost: PrivacyBudget,
}

/// Audit trail of budget consumption under basic composition.
///
/// Charges are exact rationals of the declared budget; a charge that would
/// push any component past the whole budget fails immediately and
/// [`finalize`](Self::finalize) fails unless the charges sum to exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    declared: PrivacyBudget,
    entries: Vec<LedgerEntry>,
    spent: Share,
}

impl PrivacyLedger {
    pub fn new(declared: PrivacyBudget) -> Self {
        Self { declared, entries: Vec::new(), spent: Share::zero() }
    }

    pub fn declared(&self) -> PrivacyBudget {
        self.declared
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn spent(&self) -> Share {
        self.spent
    }

    /// The concrete budget a share corresponds to.
    pub fn budget_of(&self, share: Share) -> PrivacyBudget {
        self.declared.scaled(ratio_to_f64(share.primary), ratio_to_f64(share.delta))
    }

    /// ρ of a share; only meaningful on zCDP ledgers.
    pub fn rho_of(&self, share: Share) -> Result<f64> {
        match self.budget_of(share) {
            PrivacyBudget::Zcdp { rho } => Ok(rho),
            other => Err(Error::BudgetKindMismatch { declared: "zcdp", got: other.kind() }),
        }
    }

    /// (ε, δ) of a share; only meaningful on approximate-DP ledgers.
    pub fn epsilon_delta_of(&self, share: Share) -> Result<(f64, f64)> {
        match self.budget_of(share) {
            PrivacyBudget::ApproxDp { epsilon, delta } => Ok((epsilon, delta)),
            other => Err(Error::BudgetKindMismatch { declared: "approx-dp", got: other.kind() }),
        }
    }

    pub fn charge(&mut self, label: impl Into<String>, share: Share) -> Result<()> {
        let label = label.into();
        let primary = self.spent.primary + share.primary;
        let delta = match self.declared {
            PrivacyBudget::Zcdp { .. } => self.spent.delta,
            PrivacyBudget::ApproxDp { .. } => self.spent.delta + share.delta,
        };
        let one = Ratio::from_integer(1);
        if primary > one || delta > one {
            return Err(Error::BudgetOverspend { label, total: format!("{primary} (delta {delta})") });
        }
        let cost = self.budget_of(share);
        self.spent = Share { primary, delta };
        self.entries.push(LedgerEntry { label, share, cost });
        Ok(())
    }

    /// Checks that the recorded charges add up to the declared budget exactly.
    pub fn finalize(&self) -> Result<()> {
        let one = Ratio::from_integer(1);
        let delta_ok = match self.declared {
            PrivacyBudget::Zcdp { .. } => true,
            PrivacyBudget::ApproxDp { .. } => self.spent.delta == one,
        };
        if self.spent.primary == one && delta_ok {
            Ok(())
        } else {
            Err(Error::LedgerUnbalanced {
                charged: format!("{} (delta {})", self.spent.primary, self.spent.delta),
            })
        }
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
