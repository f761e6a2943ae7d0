use serde::Serialize;

use crate::error::{Error, Result};

/// Multiplier for the default confidence band (three standard errors).
pub const DEFAULT_Z: f64 = 3.0;

/// Sample mean with its standard error and a symmetric `z`-standard-error interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McEstimate {
    pub fn new(mean: f64, std_error: f64, n: usize) -> Self {
        Self {
            mean,
            std_error,
            n,
            z: DEFAULT_Z,
            ci_low: mean - DEFAULT_Z * std_error,
            ci_high: mean + DEFAULT_Z * std_error,
        }
    }

    /// Mean and standard error of `xs`, summed in order.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self::new(mean, se, n))
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self.ci_low = self.mean - z * self.std_error;
        self.ci_high = self.mean + z * self.std_error;
        self
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::new(self.mean * c, self.std_error * c.abs(), self.n).with_z(self.z)
    }

    /// Standard deviation of a single draw.
    pub fn sample_sd(&self) -> f64 {
        self.std_error * (self.n as f64).sqrt()
    }

    /// `|m1 - m2| / sqrt(se1^2 + se2^2)`; 0 when both are exact and equal.
    pub fn z_distance(&self, other: &McEstimate) -> f64 {
        let diff = (self.mean - other.mean).abs();
        let se = self.std_error.hypot(other.std_error);
        if diff == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            diff / se
        }
    }

    /// Joint `k`-standard-error agreement.
    pub fn agrees_with(&self, other: &McEstimate, k: f64) -> bool {
        self.z_distance(other) <= k
    }

    /// `(mean - value) / se` with the same 0/inf conventions as [`z_distance`](Self::z_distance).
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = self.mean - value;
        if diff == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            diff.signum() * f64::INFINITY
        } else {
            diff / self.std_error
        }
    }
}

/// Sample covariance of paired draws with the standard error of the product
/// mean, for orthogonality tests. Returns `(cov, se, correlation)`.
pub fn covariance_test(d: &[f64], s: &[f64]) -> Result<(f64, f64, f64)> {
    if d.len() != s.len() || d.len() < 3 {
        return Err(Error::InvalidArgument(
            "covariance needs >= 3 paired samples".into(),
        ));
    }
    let n = d.len() as f64;
    let md = d.iter().sum::<f64>() / n;
    let ms = s.iter().sum::<f64>() / n;
    let prods: Vec<f64> = d.iter().zip(s).map(|(a, b)| (a - md) * (b - ms)).collect();
    let est = McEstimate::from_samples(&prods)?;
    let cov = est.mean * n / (n - 1.0);
    let vd = d.iter().map(|a| (a - md).powi(2)).sum::<f64>();
    let vs = s.iter().map(|b| (b - ms).powi(2)).sum::<f64>();
    let corr = if vd > 0.0 && vs > 0.0 {
        prods.iter().sum::<f64>() / (vd * vs).sqrt()
    } else {
        0.0
    };
    Ok((cov, est.std_error * n / (n - 1.0), corr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(e.ci_low <= e.mean && e.mean <= e.ci_high);
        assert!(McEstimate::from_samples(&[]).is_err());
    }

    #[test]
    fn agreement_conventions() {
        let a = McEstimate::new(1.0, 0.0, 10);
        assert!(a.agrees_with(&a, 3.0));
        assert!(!a.agrees_with(&McEstimate::new(1.1, 0.0, 10), 3.0));
        let b = McEstimate::new(1.0, 0.1, 10);
        let c = McEstimate::new(1.3, 0.1, 10);
        assert!((b.z_distance(&c) - 0.3 / 0.02f64.sqrt()).abs() < 1e-12);
        assert!(b.agrees_with(&c, 3.0));
    }

    #[test]
    fn covariance_of_independent_draws_is_small() {
        let d: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64).collect();
        let s: Vec<f64> = (0..1000).map(|i| ((i * 104_729) % 37) as f64).collect();
        let (cov, se, _) = covariance_test(&d, &s).unwrap();
        assert!(cov.abs() < 4.0 * se);
        let (cov, se, corr) = covariance_test(&d, &d).unwrap();
        assert!(cov > 10.0 * se);
        assert!((corr - 1.0).abs() < 1e-12);
    }
}
