//! Martingale tests in the mass variable.
//!
//! For a field replicate the increment `D = (Z^x - Z^a) - compensator` is
//! formed with a nested Monte Carlo compensator. Two clauses are tested: `D`
//! has mean zero, and `D` is uncorrelated with statistics of the field below
//! `a`. Both use three standard errors.

use rayon::prelude::*;

use crate::coupling::{check_x_grid, simulate_mass_field};
use crate::error::{Error, Result};
use crate::excursion::{generator_samples, DeltaQConfig, StepFunction};
use crate::girsanov::phi_inner;
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::NoiseStream;
use crate::verification::{covariance_test, McEstimate, TestReport, DEFAULT_Z};

#[derive(Debug, Clone, Copy)]
pub struct MartingaleConfig {
    /// Simulation grid; its horizon is the observation time.
    pub grid: TimeGrid,
    pub n_outer: usize,
    pub n_inner: usize,
}

impl MartingaleConfig {
    fn check(&self) -> Result<()> {
        if self.n_outer < 3 || self.n_inner == 0 {
            return Err(Error::InvalidArgument(
                "need n_outer >= 3 and n_inner >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One outer replicate: the increment and the statistics it must be orthogonal to.
struct Draw {
    d: f64,
    stats: Vec<f64>,
    /// Variance of the compensator's inner Monte Carlo error.
    inner_var: f64,
}

const STAT_NAMES: [&str; 3] = ["z_a", "zeta_a", "area_a"];

/// `Z^a_t`, `min(zeta(Z^a), t)` and `int_0^t Z^a ds`.
fn below_stats(za: &[f64], grid: TimeGrid) -> Vec<f64> {
    let n = grid.n_steps();
    let zeta = (1..=n)
        .find(|&k| za[k] == 0.0)
        .map_or(grid.horizon(), |k| grid.time(k));
    let area = za[..n].iter().sum::<f64>() * grid.dt();
    vec![za[n], zeta, area]
}

fn summarize(name: &str, draws: &[Draw], stat_names: &[&str]) -> Result<TestReport> {
    let d: Vec<f64> = draws.iter().map(|x| x.d).collect();
    let mean = McEstimate::from_samples(&d)?;
    let z_mean = mean.z_score(0.0).abs();
    let mut worst = z_mean;
    let mut diagnostics = vec![
        ("mean", mean.mean),
        ("mean_se", mean.std_error),
        ("z_mean", z_mean),
    ];
    let mut covs = Vec::new();
    for (j, label) in stat_names.iter().enumerate() {
        let s: Vec<f64> = draws.iter().map(|x| x.stats[j]).collect();
        let (cov, se, corr) = covariance_test(&d, &s)?;
        let z = if cov == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            (cov / se).abs()
        };
        worst = worst.max(z);
        covs.push((label.to_string(), cov, se, corr, z));
    }
    let outer_var = mean.sample_sd().powi(2);
    let inner_var = draws.iter().map(|x| x.inner_var).sum::<f64>() / draws.len() as f64;
    let inner_share = if outer_var > 0.0 {
        inner_var / outer_var
    } else {
        0.0
    };
    let mut report = TestReport::new(name, worst, DEFAULT_Z, Some(worst <= DEFAULT_Z));
    for (k, v) in diagnostics.drain(..) {
        report.diagnostic(k, v);
    }
    for (label, cov, se, corr, z) in covs {
        report
            .diagnostic(&format!("cov_{label}"), cov)
            .diagnostic(&format!("cov_{label}_se"), se)
            .diagnostic(&format!("corr_{label}"), corr)
            .diagnostic(&format!("z_cov_{label}"), z);
    }
    report.diagnostic("inner_noise_share", inner_share);
    if inner_share > 0.5 {
        report.note = Some("inner noise dominates the increment variance; raise n_inner".into());
    }
    Ok(report)
}

fn check_a(x_grid: &[f64], a_index: usize) -> Result<()> {
    check_x_grid(x_grid)?;
    if a_index >= x_grid.len() {
        return Err(Error::InvalidArgument(format!(
            "a_index {a_index} outside the x-grid"
        )));
    }
    Ok(())
}

/// Martingale test for `x -> Z^x_t - int_0^x int L_t(Z^xi, u) Q_{0,t}(du) dxi`
/// between `a = x_grid[a_index]` and `x = x_grid[last]`, at `t = cfg.grid` horizon.
///
/// The compensator cell `[x_k, x_{k+1}]` contributes
/// `dx * mean L_t(Z^{x_k}, U)` with `U` started at `dx` and conditioned to
/// survive, so each cell's conditional mean is exact up to time discretization.
pub fn martingale_test_m(
    spec: &DriftSpec,
    x_grid: &[f64],
    a_index: usize,
    cfg: MartingaleConfig,
    stream: NoiseStream,
) -> Result<TestReport> {
    check_a(x_grid, a_index)?;
    cfg.check()?;
    let grid = cfg.grid;
    let n = grid.n_steps();
    let last = x_grid.len() - 1;
    let draws: Vec<Draw> = (0..cfg.n_outer)
        .into_par_iter()
        .map(|r| {
            let rs = stream.child(r as u64);
            let field = simulate_mass_field(x_grid, spec, grid, rs.fork("field"))?;
            let paths = field.cumulative_paths();
            let mut comp = 0.0;
            let mut inner_var = 0.0;
            for k in a_index..last {
                let dx = x_grid[k + 1] - x_grid[k];
                let (m, v) = phi_inner(
                    spec,
                    &paths[k],
                    dx,
                    n,
                    grid,
                    cfg.n_inner,
                    rs.fork("inner").child(k as u64),
                )?;
                comp += dx * m;
                inner_var += dx * dx * v / cfg.n_inner as f64;
            }
            let d = paths[last][n] - paths[a_index][n] - comp;
            Ok(Draw {
                d,
                stats: below_stats(&paths[a_index], grid),
                inner_var,
            })
        })
        .collect::<Result<_>>()?;
    let mut report = summarize("martingale_m", &draws, &STAT_NAMES)?;
    report
        .param("drift", spec.label())
        .param("x", x_grid[last])
        .param("a", x_grid[a_index])
        .param("cells", last)
        .param("t", grid.horizon())
        .param("dt", grid.dt())
        .param("n_outer", cfg.n_outer)
        .param("n_inner", cfg.n_inner);
    Ok(report.with_seed(stream.seed()))
}

/// Martingale test for `Phi_g(Z^x) - Phi_g(Z^0) - int_0^x A Phi_g(Z^xi) dxi`,
/// with the generator estimated from `n_inner` tilted delta-atoms per cell.
/// The zero-mean clause uses the whole range; orthogonality uses the
/// increment above `a = x_grid[a_index]` against `Phi_g(Z^a)`, `Z^a_T` and
/// `min(zeta(Z^a), T)`.
pub fn generator_martingale_test(
    spec: &DriftSpec,
    g: &StepFunction,
    x_grid: &[f64],
    a_index: usize,
    delta: DeltaQConfig,
    cfg: MartingaleConfig,
    stream: NoiseStream,
) -> Result<TestReport> {
    check_a(x_grid, a_index)?;
    cfg.check()?;
    let grid = cfg.grid;
    let last = x_grid.len() - 1;
    let rate = delta.rate_per_mass();
    let rows: Vec<(Draw, f64)> = (0..cfg.n_outer)
        .into_par_iter()
        .map(|r| {
            let rs = stream.child(r as u64);
            let field = simulate_mass_field(x_grid, spec, grid, rs.fork("field"))?;
            let paths = field.cumulative_paths();
            let phis: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let sp = SamplePath::from_values(grid, p.clone(), false)
                        .expect("field paths are valid");
                    g.laplace(&sp)
                })
                .collect();
            let mut comp_low = 0.0;
            let mut comp_high = 0.0;
            let mut inner_var = 0.0;
            for k in 0..last {
                let dx = x_grid[k + 1] - x_grid[k];
                let xs = generator_samples(
                    spec,
                    g,
                    &paths[k],
                    delta,
                    cfg.n_inner,
                    grid,
                    rs.fork("inner").child(k as u64),
                )?;
                let est = McEstimate::from_samples(&xs)?.scaled(phis[k] * rate);
                if k < a_index {
                    comp_low += dx * est.mean;
                } else {
                    comp_high += dx * est.mean;
                    inner_var += (dx * est.std_error).powi(2);
                }
            }
            let full = phis[last] - phis[0] - comp_low - comp_high;
            let d = phis[last] - phis[a_index] - comp_high;
            let mut stats = below_stats(&paths[a_index], grid);
            stats[2] = phis[a_index];
            Ok((
                Draw {
                    d,
                    stats,
                    inner_var,
                },
                full,
            ))
        })
        .collect::<Result<_>>()?;
    let (draws, full): (Vec<Draw>, Vec<f64>) = rows.into_iter().unzip();
    let mut report = summarize("generator_martingale", &draws, &["z_a", "zeta_a", "phi_a"])?;
    let whole = McEstimate::from_samples(&full)?;
    let z_full = whole.z_score(0.0).abs();
    report
        .diagnostic("full_mean", whole.mean)
        .diagnostic("full_mean_se", whole.std_error)
        .diagnostic("z_full_mean", z_full);
    if z_full > report.statistic {
        report.statistic = z_full;
        report.pass = Some(z_full <= DEFAULT_Z);
    }
    report
        .param("drift", spec.label())
        .param("x", x_grid[last])
        .param("a", x_grid[a_index])
        .param("cells", last)
        .param("horizon", grid.horizon())
        .param("dt", grid.dt())
        .param("delta", delta.delta())
        .param("n_outer", cfg.n_outer)
        .param("n_inner", cfg.n_inner);
    Ok(report.with_seed(stream.seed()))
}
