use crate::error::BenchError;

/// Mean after dropping `⌊trim·k⌋` values from each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Result<f64, BenchError> {
    if !(0.0..0.5).contains(&trim) {
        return Err(BenchError::Config(format!("trim must lie in [0, 0.5), got {trim}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim * v.len() as f64).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    if kept.is_empty() {
        return Err(BenchError::Config("nothing left to average after trimming".into()));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut m = vec![0.0; rows.first().map_or(0, |r| r.len())];
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, v)| *a += v / n);
    }
    m
}
