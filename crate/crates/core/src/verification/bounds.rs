//! Mean-increment bound in the mass variable, the pathwise dominations of
//! the dyadic coupling, and the bounds on `phi`.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{
    domination_violations, dyadic_coupled_field, simulate_mass_field, uniform_x_grid,
};
use crate::error::{Error, Result};
use crate::girsanov::{estimate_phi, CheckSetup};
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::NoiseStream;
use crate::verification::{McEstimate, TestReport, DEFAULT_Z};

/// x-cells of the dyadic coupled field.
pub const DYADIC_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSuite {
    /// `E[Z^{x+y}_t - Z^x_t]` against `y e^{theta t}`: two-sided for linear
    /// drifts (the bound is attained), one-sided otherwise.
    pub mean_bound: TestReport,
    /// Violations of `Z~ <= Y` increment- and cumulative-wise; must be zero.
    pub domination: TestReport,
}

impl BoundSuite {
    pub fn reports(&self) -> [&TestReport; 2] {
        [&self.mean_bound, &self.domination]
    }
}

pub fn expectation_bound_suite(
    spec: &DriftSpec,
    x: f64,
    y: f64,
    grid: TimeGrid,
    n: usize,
    stream: NoiseStream,
) -> Result<BoundSuite> {
    if !(x >= 0.0 && y > 0.0) || n < 2 {
        return Err(Error::InvalidArgument(
            "need x >= 0, y > 0 and n >= 2".into(),
        ));
    }
    let t = grid.horizon();
    let xs = if x == 0.0 {
        vec![0.0, y]
    } else {
        vec![0.0, x, x + y]
    };
    let last = xs.len() - 1;
    let incs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| {
            let f = simulate_mass_field(&xs, spec, grid, stream.fork("field").child(r as u64))?;
            Ok(f.increments()[last - 1].last())
        })
        .collect::<Result<_>>()?;
    let est = McEstimate::from_samples(&incs)?;
    let bound = y * (spec.theta() * t).exp();
    let z = est.z_score(bound);
    let linear = spec.is_linear();
    let (statistic, pass) = if linear {
        (z.abs(), z.abs() <= DEFAULT_Z)
    } else {
        (z, z <= DEFAULT_Z)
    };
    let mut mean_bound = TestReport::new("expectation_bound", statistic, DEFAULT_Z, Some(pass));
    mean_bound
        .param("drift", spec.label())
        .param("x", x)
        .param("y", y)
        .param("t", t)
        .param("dt", grid.dt())
        .param("n", n)
        .param("sided", if linear { "two" } else { "one" })
        .diagnostic("mean", est.mean)
        .diagnostic("mean_se", est.std_error)
        .diagnostic("bound", bound);

    let dyadic = uniform_x_grid(x + y, DYADIC_CELLS);
    let counts: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let (yf, zf) =
                dyadic_coupled_field(&dyadic, spec, grid, stream.fork("dyadic").child(r as u64))?;
            Ok(domination_violations(&yf, &zf))
        })
        .collect::<Result<_>>()?;
    let inc: usize = counts.iter().map(|c| c.0).sum();
    let cum: usize = counts.iter().map(|c| c.1).sum();
    let total = (inc + cum) as f64;
    let mut domination = TestReport::new("pathwise_domination", total, 0.0, Some(total == 0.0));
    domination
        .param("drift", spec.label())
        .param("x_max", x + y)
        .param("cells", DYADIC_CELLS)
        .param("t", t)
        .param("dt", grid.dt())
        .param("replicates", n)
        .diagnostic("increment_violations", inc as f64)
        .diagnostic("cumulative_violations", cum as f64)
        .diagnostic(
            "grid_points_checked",
            (2 * n * DYADIC_CELLS * (grid.n_steps() + 1)) as f64,
        );
    Ok(BoundSuite {
        mean_bound: mean_bound.with_seed(stream.seed()),
        domination: domination.with_seed(stream.seed()),
    })
}

/// `phi(t) = E_{Q_{y,inf}}[L_t(z, U)]` against `[0, e^{theta t}]`, the upper
/// end widened by three standard errors. With `near_one` the estimate must
/// instead lie within three standard errors of 1 (for `t` near 0).
pub fn phi_bound_check(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    setup: CheckSetup,
    near_one: bool,
    stream: NoiseStream,
) -> Result<TestReport> {
    let est = estimate_phi(spec, z, y, setup, stream)?;
    let phi = est.phi;
    let upper = (spec.theta() * setup.t).exp();
    let distance = |target: f64| {
        let gap = phi.mean - target;
        if gap == 0.0 {
            0.0
        } else if phi.std_error == 0.0 {
            gap.signum() * f64::INFINITY
        } else {
            gap / phi.std_error
        }
    };
    let (name, statistic, pass) = if near_one {
        let z = distance(1.0).abs();
        ("phi_small_time", z, z <= DEFAULT_Z)
    } else {
        let z = distance(upper);
        ("phi_bound", z, phi.mean >= 0.0 && z <= DEFAULT_Z)
    };
    let mut report = TestReport::new(name, statistic, DEFAULT_Z, Some(pass));
    report
        .param("drift", spec.label())
        .param("y", y)
        .param("t", setup.t)
        .param("dt", setup.grid.dt())
        .param("n", setup.n)
        .diagnostic("phi", phi.mean)
        .diagnostic("phi_se", phi.std_error)
        .diagnostic("upper", upper)
        .diagnostic("g_mean", est.g_mean.mean)
        .diagnostic("g_mean_se", est.g_mean.std_error)
        .diagnostic("ess_fraction", est.ess_fraction);
    Ok(report.with_seed(stream.seed()))
}

/// Informational continuity probe of `z -> phi(t)`: `phi` at `z` and at
/// `z + bump` on `[0, t]`, estimated with common random numbers. There is
/// no quantitative modulus to test against, so `pass` is `None`.
pub fn phi_continuity(
    spec: &DriftSpec,
    z: &SamplePath,
    bump: f64,
    y: f64,
    setup: CheckSetup,
    stream: NoiseStream,
) -> Result<TestReport> {
    if !(bump.is_finite() && bump >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bump must be >= 0, got {bump}"
        )));
    }
    let shifted: Vec<f64> = z.dense().iter().map(|v| v + bump).collect();
    let shifted = SamplePath::from_values(z.grid(), shifted, false)?;
    let base = estimate_phi(spec, z, y, setup, stream)?.phi;
    let moved = estimate_phi(spec, &shifted, y, setup, stream)?.phi;
    let diff = (moved.mean - base.mean).abs();
    let mut report = TestReport::new("phi_continuity", diff, f64::NAN, None);
    report
        .param("drift", spec.label())
        .param("bump", bump)
        .param("y", y)
        .param("t", setup.t)
        .param("n", setup.n)
        .diagnostic("phi", base.mean)
        .diagnostic("phi_se", base.std_error)
        .diagnostic("phi_bumped", moved.mean)
        .diagnostic("phi_bumped_se", moved.std_error);
    report.note = Some("informational".into());
    Ok(report.with_seed(stream.seed()))
}
