use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dpmean_bench::output::{trials_path, write_rows, write_trials};
use dpmean_bench::{load_mnist, run_experiment, run_quantile_sweep, BenchError, DataSpec, Estimator, ExperimentConfig, ExperimentOutput, Model};

#[derive(Parser)]
#[command(name = "dpmean-bench", version, about = "Monte Carlo experiments for private mean estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Central model on synthetic data.
    Central(Common),
    /// Local model on synthetic data.
    Local(Common),
    /// Shuffle model on synthetic data.
    Shuffle(Common),
    /// Error of the clipped mean across clipping ranks on the line dataset.
    SweepQuantile(Common),
    /// Central model on one MNIST digit class.
    Mnist(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 4000)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    d: usize,
    /// zCDP budget (default 0.5 when --eps is absent).
    #[arg(long)]
    rho: Option<f64>,
    /// Approximate-DP epsilon; converted to ρ at --delta for zCDP models.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    delta: f64,
    /// Each coordinate of the Gaussian mean.
    #[arg(long, default_value_t = 0.0)]
    mu_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Bound on ‖μ‖₂ (default 50√d, or 100√d when κ > 1).
    #[arg(long)]
    range_r: Option<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    trim: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// shifted-cm, cm, naive-gaussian or nonprivate.
    #[arg(long, default_value = "shifted-cm")]
    estimator: String,
    /// MNIST label to keep (all images when absent).
    #[arg(long)]
    digit: Option<u8>,
    /// Use the line dataset instead of Gaussian samples.
    #[arg(long)]
    line: bool,
    /// Directory holding train-images-idx3-ubyte and train-labels-idx1-ubyte.
    #[arg(long, default_value = "data/mnist")]
    mnist_dir: PathBuf,
    /// Also write per-trial values next to --out.
    #[arg(long)]
    per_trial: bool,
    /// Number of ranks in a sweep.
    #[arg(long, default_value_t = 20)]
    points: usize,
}

fn config(model: Model, c: &Common, data: DataSpec) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = ExperimentConfig::new(model, c.estimator.parse::<Estimator>()?, data);
    cfg.n = c.n;
    cfg.d = c.d;
    cfg.rho = c.rho;
    cfg.epsilon = c.eps;
    cfg.delta = c.delta;
    cfg.trials = c.trials;
    cfg.trim = c.trim;
    cfg.seed = c.seed;
    Ok(cfg)
}

fn synthetic(c: &Common) -> DataSpec {
    if c.line {
        DataSpec::Line
    } else {
        DataSpec::Gaussian { mu_scale: c.mu_scale, kappa: c.kappa, range_r: c.range_r }
    }
}

fn emit(out: &ExperimentOutput, c: &Common) -> Result<(), BenchError> {
    match &c.out {
        Some(path) => {
            write_rows(out, BufWriter::new(File::create(path)?))?;
            if c.per_trial {
                write_trials(out, BufWriter::new(File::create(trials_path(path))?))?;
            }
        }
        None => write_rows(out, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let (c, out) = match cli.command {
        Command::Central(c) => {
            let out = run_experiment(&config(Model::Central, &c, synthetic(&c))?)?;
            (c, out)
        }
        Command::Local(c) => {
            let out = run_experiment(&config(Model::Local, &c, synthetic(&c))?)?;
            (c, out)
        }
        Command::Shuffle(c) => {
            let out = run_experiment(&config(Model::Shuffle, &c, synthetic(&c))?)?;
            (c, out)
        }
        Command::SweepQuantile(c) => {
            if c.points == 0 {
                return Err(BenchError::Config("--points must be positive".into()));
            }
            let out = run_quantile_sweep(&config(Model::Central, &c, DataSpec::Line)?, c.points)?;
            (c, out)
        }
        Command::Mnist(c) => {
            let cfg = config(Model::Central, &c, DataSpec::Line)?;
            let data = load_mnist(&c.mnist_dir.join("train-images-idx3-ubyte"), &c.mnist_dir.join("train-labels-idx1-ubyte"), c.digit)?;
            let name = c.digit.map_or("mnist".to_string(), |d| format!("mnist-{d}"));
            let out = run_experiment(&ExperimentConfig { data: DataSpec::Fixed { name, data: Arc::new(data) }, ..cfg })?;
            (c, out)
        }
    };
    emit(&out, &c)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
