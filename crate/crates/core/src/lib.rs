//! Differentially private mean estimation with clipping thresholds chosen
//! from private norm quantiles, in the central, local and shuffle models.

pub mod central;
pub mod dataset;
pub mod error;
pub mod hierarchy;
pub mod local;
pub mod privacy;
pub mod quantile;
pub mod rng;
pub mod shuffle;
pub mod transform;

pub use central::{
    clip_l2, clipped_mean, clipped_mean_auto, error_functional, gaussian_mean, optimal_clip_rank,
    private_clip_threshold, shifted_clipped_mean, GaussianBounds, MeanEstimate,
};
pub use dataset::Dataset;
pub use local::ldp_pipeline;
pub use shuffle::{shuffle_mean_d, shuffle_pipeline};
pub use error::{Error, Result};
pub use privacy::{PrivacyBudget, PrivacyLedger, Share};
pub use rng::RandomSource;
