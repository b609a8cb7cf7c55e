//! Benchmark harness for the `dpmean` estimators: data generators, the
//! MNIST reader, the Monte Carlo driver and CSV output.

pub mod data;
pub mod error;
pub mod experiment;
pub mod output;
pub mod stats;

pub use data::{gen_gaussian, gen_line, load_mnist, GaussianModel};
pub use error::BenchError;
pub use experiment::{run_experiment, run_quantile_sweep, DataSpec, Estimator, ExperimentConfig, ExperimentOutput, ExperimentRow, Metric, Model};
pub use stats::trimmed_mean;
