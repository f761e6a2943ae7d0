//! Checks against the closed-form linear drift: Euler endpoints against the
//! exact transition, and the jump structure of the linear field.

use rayon::prelude::*;

use crate::coupling::{check_nesting, count_jumps, simulate_linear_field, uniform_x_grid};
use crate::error::{Error, Result};
use crate::kernels::{linear_transition_params, simulate_linear_exact, simulate_z};
use crate::model::{make_drift, DriftKind, TimeGrid};
use crate::rng::NoiseStream;
use crate::verification::{ks_two_sample, McEstimate, TestReport, DEFAULT_Z};

/// Minimum fraction of replicates in which the jump set at the later time
/// must be nested in the jump set at the earlier one.
pub const MIN_NESTED_FRACTION: f64 = 0.99;

/// Euler endpoints of `dY = theta Y dt + 2 sqrt(Y) dB` at the grid horizon
/// against the exact transition: a two-sample KS test, the mean `x e^{theta t}`
/// and the extinction probability, each from `n` samples per side.
pub fn linear_oracle(
    theta: f64,
    x: f64,
    grid: TimeGrid,
    n: usize,
    level: f64,
    stream: NoiseStream,
) -> Result<Vec<TestReport>> {
    if !(x > 0.0) || n < 2 {
        return Err(Error::InvalidArgument("need x > 0 and n >= 2".into()));
    }
    let spec = make_drift(DriftKind::Linear, &[theta])?;
    let t = grid.horizon();
    let euler: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| Ok(simulate_z(x, &spec, grid, stream.fork("euler").child(r as u64))?.last()))
        .collect::<Result<_>>()?;
    let exact: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| simulate_linear_exact(x, theta, t, stream.fork("exact").child(r as u64)))
        .collect::<Result<_>>()?;

    let mut ks = ks_two_sample(&euler, &exact, level)?.with_name("linear_ks");
    ks.param("theta", theta)
        .param("x", x)
        .param("t", t)
        .param("dt", grid.dt())
        .param("n", n);

    let mean = McEstimate::from_samples(&euler)?;
    let expected = x * (theta * t).exp();
    let z = mean.z_score(expected).abs();
    let mut mean_report = TestReport::new("linear_mean", z, DEFAULT_Z, Some(z <= DEFAULT_Z));
    mean_report
        .param("theta", theta)
        .param("x", x)
        .param("t", t)
        .param("dt", grid.dt())
        .param("n", n)
        .diagnostic("mean", mean.mean)
        .diagnostic("mean_se", mean.std_error)
        .diagnostic("expected", expected);

    let zeros: Vec<f64> = euler
        .iter()
        .map(|&v| if v == 0.0 { 1.0 } else { 0.0 })
        .collect();
    let p = McEstimate::from_samples(&zeros)?;
    let (rate, _) = linear_transition_params(theta, t);
    let p_exact = (-x * rate).exp();
    // Binomial standard error at the exact probability, so a sample with no
    // extinctions still gets a finite z.
    let se = (p_exact * (1.0 - p_exact) / n as f64).sqrt();
    let z = (p.mean - p_exact).abs() / se;
    let mut ext = TestReport::new("linear_extinction", z, DEFAULT_Z, Some(z <= DEFAULT_Z));
    ext.param("theta", theta)
        .param("x", x)
        .param("t", t)
        .param("dt", grid.dt())
        .param("n", n)
        .diagnostic("fraction", p.mean)
        .diagnostic("expected", p_exact)
        .diagnostic("se", se);

    Ok([ks, mean_report, ext]
        .into_iter()
        .map(|r| r.with_seed(stream.seed()))
        .collect())
}

/// Setup for [`jump_structure`].
#[derive(Debug, Clone, Copy)]
pub struct JumpConfig {
    pub x_max: f64,
    pub cells: usize,
    /// Grid whose horizon is the later time `t`.
    pub grid: TimeGrid,
    /// Earlier time for the nesting check.
    pub s: f64,
    pub atol: f64,
    pub n: usize,
}

/// Expected number of jumps of the linear field on `[0, x_max]` at time
/// `t`: every jump is a surviving family, and families survive at rate
/// `theta / (2 (1 - e^{-theta t}))` per unit mass.
pub fn expected_jump_count(theta: f64, x_max: f64, t: f64) -> f64 {
    x_max * linear_transition_params(theta, t).0
}

/// Jump count of the exactly simulated linear field at the horizon against
/// [`expected_jump_count`], and the fraction of replicates whose jump set at
/// the horizon is nested in the jump set at `cfg.s`.
pub fn jump_structure(theta: f64, cfg: JumpConfig, stream: NoiseStream) -> Result<Vec<TestReport>> {
    if cfg.n < 2 || cfg.cells == 0 || !(cfg.x_max > 0.0) {
        return Err(Error::InvalidArgument(
            "need n >= 2, cells >= 1 and x_max > 0".into(),
        ));
    }
    let t = cfg.grid.horizon();
    if !(cfg.s > 0.0 && cfg.s < t) {
        return Err(Error::InvalidArgument(format!(
            "nesting time s must lie in (0, {t})"
        )));
    }
    let xs = uniform_x_grid(cfg.x_max, cfg.cells);
    let rows: Vec<(f64, bool)> = (0..cfg.n)
        .into_par_iter()
        .map(|r| {
            let field = simulate_linear_field(&xs, theta, cfg.grid, stream.child(r as u64))?;
            let count = count_jumps(&field, t, cfg.atol)?.len() as f64;
            Ok((count, check_nesting(&field, cfg.s, t, cfg.atol)?))
        })
        .collect::<Result<_>>()?;
    let counts: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let est = McEstimate::from_samples(&counts)?;
    let expected = expected_jump_count(theta, cfg.x_max, t);
    let z = est.z_score(expected).abs();
    let mut count = TestReport::new("jump_count", z, DEFAULT_Z, Some(z <= DEFAULT_Z));
    count
        .param("theta", theta)
        .param("x_max", cfg.x_max)
        .param("cells", cfg.cells)
        .param("t", t)
        .param("dt", cfg.grid.dt())
        .param("n", cfg.n)
        .param("atol", cfg.atol)
        .diagnostic("mean", est.mean)
        .diagnostic("mean_se", est.std_error)
        .diagnostic("expected", expected);

    let nested = rows.iter().filter(|r| r.1).count() as f64 / cfg.n as f64;
    let mut nesting = TestReport::new(
        "nesting",
        nested,
        MIN_NESTED_FRACTION,
        Some(nested >= MIN_NESTED_FRACTION),
    );
    nesting
        .param("theta", theta)
        .param("x_max", cfg.x_max)
        .param("cells", cfg.cells)
        .param("s", cfg.s)
        .param("t", t)
        .param("n", cfg.n)
        .param("atol", cfg.atol);
    Ok(vec![
        count.with_seed(stream.seed()),
        nesting.with_seed(stream.seed()),
    ])
}
