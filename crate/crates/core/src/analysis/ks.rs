//! One-sample Kolmogorov-Smirnov distance.

use crate::error::{Error, Result};

/// `sup_x |F_n(x) - F(x)|` for the empirical CDF of `samples`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "need at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("samples", "NaN sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic 5% critical value `1.358 / √n`.
pub fn ks_critical(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}
