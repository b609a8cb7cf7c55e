//! CSV emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::BenchError;
use crate::experiment::{ExperimentOutput, ExperimentRow};

pub const HEADER: [&str; 15] =
    ["model", "estimator", "n", "d", "rho", "epsilon", "delta", "mu_scale", "kappa", "R", "trials", "trim", "seed", "metric", "value"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fields(r: &ExperimentRow) -> Vec<String> {
    vec![
        r.model.to_string(),
        r.estimator.clone(),
        r.n.to_string(),
        r.d.to_string(),
        r.rho.to_string(),
        r.epsilon.to_string(),
        r.delta.to_string(),
        opt(r.mu_scale),
        opt(r.kappa),
        opt(r.range_r),
        r.trials.to_string(),
        r.trim.to_string(),
        r.seed.to_string(),
        r.metric.to_string(),
    ]
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// One line per row under [`HEADER`].
pub fn write_rows<W: Write>(out: &ExperimentOutput, w: W) -> Result<(), BenchError> {
    let mut w = writer(w);
    w.write_record(HEADER)?;
    for r in &out.rows {
        let mut f = fields(r);
        f.push(r.value.to_string());
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (row, trial): the row's columns with a `trial` column
/// before `metric`.
pub fn write_trials<W: Write>(out: &ExperimentOutput, w: W) -> Result<(), BenchError> {
    let mut w = writer(w);
    let mut header: Vec<&str> = HEADER[..13].to_vec();
    header.extend(["trial", "metric", "value"]);
    w.write_record(&header)?;
    for tv in &out.trials {
        let r = &out.rows[tv.row];
        for (t, v) in tv.values.iter().enumerate() {
            let mut f = fields(r);
            f.insert(13, t.to_string());
            f.push(v.to_string());
            w.write_record(&f)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `results.csv` → `results.trials.csv`.
pub fn trials_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = if out.extension().is_some_and(|e| e == "csv") { stem } else { out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default() };
    out.with_file_name(format!("{name}.trials.csv"))
}
