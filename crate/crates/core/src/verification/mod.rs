//! Statistical harness: estimators, distribution tests, linear-drift oracles,
//! martingale tests in the mass variable, Riemann-sum convergence, the
//! reconstruction trend and the expectation bounds.

mod bounds;
mod estimate;
mod ks;
mod martingale;
mod oracle;
mod reconstruction;
mod riemann;

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::Serialize;

pub use bounds::{expectation_bound_suite, phi_bound_check, phi_continuity, BoundSuite};
pub use estimate::{covariance_test, McEstimate, DEFAULT_Z};
pub use ks::{
    kolmogorov_critical, kolmogorov_survival, ks_one_sample, ks_statistic_one_sample,
    ks_statistic_two_sample, ks_two_sample,
};
pub use martingale::{generator_martingale_test, martingale_test_m, MartingaleConfig};
pub use oracle::{
    expected_jump_count, jump_structure, linear_oracle, JumpConfig, MIN_NESTED_FRACTION,
};
pub use reconstruction::{reconstruction_ks, reconstruction_trend, ReconstructionConfig};
pub use riemann::{riemann_convergence, RiemannConfig};

/// Outcome of one statistical check. `pass` is `None` for informational or
/// guard outcomes (e.g. an insufficient sample).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: Option<bool>,
    pub diagnostics: BTreeMap<String, f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestReport {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        threshold: f64,
        pass: Option<bool>,
    ) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            statistic,
            threshold,
            pass,
            diagnostics: BTreeMap::new(),
            seed: 0,
            note: None,
        }
    }

    /// A guard outcome with no decision.
    pub fn inconclusive(name: impl Into<String>, note: impl Into<String>) -> Self {
        let mut r = Self::new(name, f64::NAN, f64::NAN, None);
        r.note = Some(note.into());
        r
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn diagnostic(&mut self, key: &str, value: f64) -> &mut Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.pass == Some(true)
    }
}
