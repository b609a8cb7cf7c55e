//! Privacy budgets, their composition ledger and the Gaussian mechanism.

mod budget;
mod ledger;
mod mechanism;

pub use budget::{zcdp_for_approx_dp, zcdp_to_approx_dp, PrivacyBudget};
pub use ledger::{LedgerEntry, PrivacyLedger, Share};
pub use mechanism::{gaussian_mechanism, gaussian_noise_std};
pub use num_rational::Ratio;
