//! One- and two-sample Kolmogorov-Smirnov tests with the asymptotic
//! Kolmogorov distribution.

use crate::error::{Error, Result};

use super::TestReport;

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic critical value `c(alpha) = sqrt(-ln(alpha/2) / 2)`; 1.628 at 1%.
pub fn kolmogorov_critical(level: f64) -> f64 {
    (-0.5 * (level / 2.0).ln()).sqrt()
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("NaN in sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// `sup |F_a - F_b|` over the pooled sample, ties handled by stepping past
/// equal values in both samples together.
pub fn ks_statistic_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS decision at `level`: pass iff `D <= c(level) sqrt((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], level: f64) -> Result<TestReport> {
    let d = ks_statistic_two_sample(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = n * m / (n + m);
    let threshold = kolmogorov_critical(level) / ne.sqrt();
    let p = kolmogorov_survival((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d);
    let mut report = TestReport::new("ks_two_sample", d, threshold, Some(d <= threshold));
    report.param("n_a", a.len());
    report.param("n_b", b.len());
    report.param("level", level);
    report.diagnostic("p_value", p);
    Ok(report)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_statistic_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let v = sorted(xs)?;
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<TestReport> {
    let d = ks_statistic_one_sample(xs, cdf)?;
    let n = xs.len() as f64;
    let threshold = kolmogorov_critical(level) / n.sqrt();
    let p = kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d);
    let mut report = TestReport::new("ks_one_sample", d, threshold, Some(d <= threshold));
    report.param("n", xs.len());
    report.param("level", level);
    report.diagnostic("p_value", p);
    Ok(report)
}
