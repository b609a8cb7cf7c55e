use std::process::Command;
use std::sync::Arc;

use dpmean::rng::RandomSource;
use dpmean_bench::data::{mnist_from_bytes, parse_idx_images};
use dpmean_bench::output::{trials_path, write_rows, write_trials};
use dpmean_bench::{gen_gaussian, gen_line, run_experiment, trimmed_mean, DataSpec, Estimator, ExperimentConfig, Model};
use nalgebra::DMatrix;

fn idx_images(images: &[[u8; 4]]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    b.extend((images.len() as u32).to_be_bytes());
    b.extend(2u32.to_be_bytes());
    b.extend(2u32.to_be_bytes());
    images.iter().for_each(|i| b.extend(i));
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend((labels.len() as u32).to_be_bytes());
    b.extend(labels);
    b
}

#[test]
fn line_dataset() {
    let ds = gen_line(3, 2);
    assert_eq!(ds.as_flat(), &[1, 1, 2, 2, 3, 3]);
    assert_eq!(ds.bound(), 3);
    let ds = gen_line(50, 7);
    assert!((ds.diameter() - 49.0 * 7f64.sqrt()).abs() < 1e-9);
    assert!((ds.radius() - 50.0 * 7f64.sqrt()).abs() < 1e-9);
}

#[test]
fn identity_gaussian_moments() {
    let (n, d) = (100_000, 4);
    let mu = vec![1.0, -2.0, 0.5, 3.0];
    let (_, xs) = gen_gaussian(n, mu.clone(), 1.0, &mut RandomSource::new(1).stream("g")).unwrap();
    let mean: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    for (m, t) in mean.iter().zip(&mu) {
        assert!((m - t).abs() < 4.0 / (n as f64).sqrt());
    }
    let cov = DMatrix::from_fn(d, d, |i, j| xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / n as f64);
    let rel = (cov - DMatrix::<f64>::identity(d, d)).norm() / (d as f64).sqrt();
    assert!(rel < 0.05, "{rel}");
}

#[test]
fn rotated_spectrum_stays_in_range() {
    let (model, _) = gen_gaussian(10, vec![0.0; 12], 9.0, &mut RandomSource::new(2).stream("g")).unwrap();
    let cov = model.covariance();
    let orth = &model.rotation * model.rotation.transpose();
    assert!((orth - DMatrix::<f64>::identity(12, 12)).norm() < 1e-9);
    for e in cov.clone().symmetric_eigen().eigenvalues.iter() {
        assert!(*e >= 1.0 - 1e-9 && *e <= 9.0 + 1e-9, "{e}");
    }
    let x: Vec<f64> = model.mu.iter().map(|m| m + 1.0).collect();
    let direct = {
        let inv = cov.try_inverse().unwrap();
        let v = nalgebra::DVector::from_element(12, 1.0);
        (v.transpose() * inv * v)[(0, 0)].sqrt()
    };
    assert!((model.mahalanobis(&x) - direct).abs() < 1e-9);
    assert!(gen_gaussian(1, vec![0.0], 0.5, &mut RandomSource::new(2).stream("g")).is_err());
}

#[test]
fn idx_fixture() {
    let images = idx_images(&[[0, 1, 2, 255], [9, 8, 7, 6]]);
    let labels = idx_labels(&[3, 7]);
    let all = mnist_from_bytes(&images, &labels, None).unwrap();
    assert_eq!(all.as_flat(), &[0, 4, 8, 1020, 36, 32, 28, 24]);
    assert!(all.as_flat().iter().all(|&v| (0..=1024).contains(&v)));
    let sevens = mnist_from_bytes(&images, &labels, Some(7)).unwrap();
    assert_eq!((sevens.n(), sevens.d()), (1, 4));

    let mut bad = images.clone();
    bad[3] = 1;
    assert!(parse_idx_images(&bad).unwrap_err().to_string().contains("magic"));
    assert!(parse_idx_images(&images[..images.len() - 1]).is_err());
    assert!(parse_idx_images(&images[..10]).is_err());
    assert!(mnist_from_bytes(&images, &idx_labels(&[3]), None).is_err());
    assert!(mnist_from_bytes(&images, &labels, Some(5)).is_err());
}

#[test]
fn trimmed_means() {
    let v: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(trimmed_mean(&v, 0.1).unwrap(), 5.5);
    assert_eq!(trimmed_mean(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
    assert_eq!(trimmed_mean(&[4.25; 7], 0.3).unwrap(), 4.25);
    assert!(trimmed_mean(&v, 0.5).is_err());
    assert!(trimmed_mean(&[], 0.0).is_err());
}

fn line_config(estimator: Estimator) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Model::Central, estimator, DataSpec::Line);
    cfg.n = 400;
    cfg.d = 16;
    cfg.trials = 40;
    cfg.seed = 7;
    cfg
}

#[test]
fn nonprivate_has_zero_empirical_error() {
    let out = run_experiment(&line_config(Estimator::NonPrivate)).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].value, 0.0);
}

#[test]
fn naive_gaussian_matches_noise_norm() {
    let cfg = line_config(Estimator::NaiveGaussian);
    let out = run_experiment(&cfg).unwrap();
    let (d, u, n, rho) = (16f64, 400f64, 400f64, 0.5f64);
    let formula = d.sqrt() * (d.sqrt() * u / n) * (1.0 / (2.0 * rho)).sqrt();
    let ratio = out.rows[0].value / formula;
    assert!((0.5..=2.0).contains(&ratio), "{ratio}");
}

#[test]
fn csv_is_deterministic() {
    let mut cfg = ExperimentConfig::new(Model::Central, Estimator::ShiftedCm, DataSpec::Gaussian { mu_scale: 1.0, kappa: 2.0, range_r: None });
    cfg.n = 300;
    cfg.d = 8;
    cfg.trials = 6;
    let render = |cfg: &ExperimentConfig| {
        let out = run_experiment(cfg).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_rows(&out, &mut a).unwrap();
        write_trials(&out, &mut b).unwrap();
        (a, b)
    };
    let (rows, trials) = render(&cfg);
    assert_eq!(render(&cfg), (rows.clone(), trials.clone()));
    let text = String::from_utf8(rows).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "model,estimator,n,d,rho,epsilon,delta,mu_scale,kappa,R,trials,trim,seed,metric,value");
    assert!(lines.next().unwrap().starts_with("central,shifted-cm,300,8,0.5,"));
    assert!(text.contains(",mahalanobis,"));
    assert_eq!(String::from_utf8(trials).unwrap().lines().count(), 1 + 2 * 6);
    cfg.seed = 1;
    assert_ne!(render(&cfg).0, text.into_bytes());
    assert_eq!(trials_path(std::path::Path::new("out/r.csv")), std::path::Path::new("out/r.trials.csv"));
}

#[test]
fn config_validation() {
    let mut cfg = line_config(Estimator::Cm);
    cfg.model = Model::Local;
    assert!(cfg.validate().is_err());
    let mut cfg = line_config(Estimator::ShiftedCm);
    cfg.rho = Some(1.0);
    cfg.epsilon = Some(1.0);
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::new(Model::Central, Estimator::ShiftedCm, DataSpec::Gaussian { mu_scale: 100.0, kappa: 1.0, range_r: None });
    cfg.d = 4;
    assert!(cfg.validate().is_err());
    cfg.data = DataSpec::Fixed { name: "x".into(), data: Arc::new(gen_line(5, 3)) };
    assert_eq!(cfg.shape(), (5, 3));
    assert!("median".parse::<Estimator>().is_err());
}

#[test]
fn baseline_ordering() {
    let run = |e| {
        let mut cfg = ExperimentConfig::new(Model::Central, e, DataSpec::Gaussian { mu_scale: 0.0, kappa: 1.0, range_r: None });
        cfg.trials = 30;
        run_experiment(&cfg).unwrap().rows[0].value
    };
    let (np, sc, naive) = (run(Estimator::NonPrivate), run(Estimator::ShiftedCm), run(Estimator::NaiveGaussian));
    assert!(np < sc && sc < naive, "{np} {sc} {naive}");
}

#[test]
fn shuffle_within_polylog_of_central() {
    let run = |model| {
        let mut cfg = ExperimentConfig::new(model, Estimator::ShiftedCm, DataSpec::Gaussian { mu_scale: 0.0, kappa: 1.0, range_r: None });
        (cfg.n, cfg.d, cfg.epsilon, cfg.trials) = (100_000, 8, Some(1.0), 6);
        run_experiment(&cfg).unwrap().rows[0].value
    };
    let (central, shuffle) = (run(Model::Central), run(Model::Shuffle));
    assert!(shuffle / central <= 20.0, "{shuffle} vs {central}");
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dpmean-bench");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let ok = Command::new(bin)
        .args(["sweep-quantile", "--n", "50", "--d", "4", "--trials", "5", "--points", "4", "--per-trial", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text.contains("cm-chosen-rank-"));
    assert!(dir.path().join("r.trials.csv").exists());

    let bad = Command::new(bin).args(["central", "--trim", "0.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = Command::new(bin).args(["local", "--estimator", "cm"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = Command::new(bin).args(["central", "--bogus"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let missing = Command::new(bin).args(["mnist", "--mnist-dir"]).arg(dir.path().join("nowhere")).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));

    std::fs::write(dir.path().join("train-images-idx3-ubyte"), idx_images(&[[0, 1, 2, 255], [9, 8, 7, 6], [1, 1, 1, 1]])).unwrap();
    std::fs::write(dir.path().join("train-labels-idx1-ubyte"), idx_labels(&[3, 7, 7])).unwrap();
    let run = Command::new(bin)
        .args(["mnist", "--digit", "7", "--trials", "3", "--estimator", "nonprivate", "--mnist-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8(run.stdout).unwrap().contains("central,nonprivate,2,4,"));
}
