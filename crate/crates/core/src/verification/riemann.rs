//! Convergence of the x-grid Riemann sums
//! `sum dx int L_t(Z^{x_k}, u) Q_{dx,inf}(du)` to the fine-grid sum with
//! entrance measure `Q_{0,inf}`.

use rayon::prelude::*;

use crate::coupling::{simulate_mass_field, uniform_x_grid};
use crate::error::{Error, Result};
use crate::girsanov::phi_inner;
use crate::model::{DriftSpec, TimeGrid};
use crate::rng::NoiseStream;
use crate::verification::{McEstimate, TestReport};

#[derive(Debug, Clone)]
pub struct RiemannConfig {
    pub x: f64,
    /// Grid up to the observation time `t`.
    pub grid: TimeGrid,
    /// Number of x-cells at each level, coarse to fine.
    pub levels: Vec<usize>,
    /// Cells of the reference sum; every level must divide it.
    pub reference_cells: usize,
    pub n_outer: usize,
    pub n_inner: usize,
}

/// Mean absolute gap to the reference at each level, and the decision that
/// the gaps decrease in trend: nonpositive least-squares slope against the
/// level index and a last gap below the first.
pub fn riemann_convergence(
    spec: &DriftSpec,
    cfg: &RiemannConfig,
    stream: NoiseStream,
) -> Result<TestReport> {
    if cfg.levels.len() < 3 {
        let mut r = TestReport::inconclusive("riemann_convergence", "insufficient levels");
        r.param("levels", cfg.levels.len());
        return Ok(r);
    }
    if cfg
        .levels
        .iter()
        .any(|&m| m == 0 || !cfg.reference_cells.is_multiple_of(m))
    {
        return Err(Error::InvalidArgument(
            "every level must divide reference_cells".into(),
        ));
    }
    if !(cfg.x > 0.0) || cfg.n_outer < 2 || cfg.n_inner == 0 {
        return Err(Error::InvalidArgument(
            "need x > 0, n_outer >= 2, n_inner >= 1".into(),
        ));
    }
    let r_cells = cfg.reference_cells;
    let xs = uniform_x_grid(cfg.x, r_cells);
    let grid = cfg.grid;
    let n = grid.n_steps();
    let gaps: Vec<Vec<f64>> = (0..cfg.n_outer)
        .into_par_iter()
        .map(|r| {
            let rs = stream.child(r as u64);
            let paths = simulate_mass_field(&xs, spec, grid, rs.fork("field"))?.cumulative_paths();
            let inner = |j: usize, y: f64| {
                phi_inner(
                    spec,
                    &paths[j],
                    y,
                    n,
                    grid,
                    cfg.n_inner,
                    rs.fork("inner").child(j as u64),
                )
            };
            let dx_ref = cfg.x / r_cells as f64;
            let mut reference = 0.0;
            for j in 0..r_cells {
                reference += dx_ref * inner(j, 0.0)?.0;
            }
            cfg.levels
                .iter()
                .map(|&m| {
                    let step = r_cells / m;
                    let dx = cfg.x / m as f64;
                    let mut s = 0.0;
                    for k in 0..m {
                        s += dx * inner(k * step, dx)?.0;
                    }
                    Ok((s - reference).abs())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let means: Vec<McEstimate> = (0..cfg.levels.len())
        .map(|l| McEstimate::from_samples(&gaps.iter().map(|g| g[l]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let m: Vec<f64> = means.iter().map(|e| e.mean).collect();
    let slope = trend_slope(&m);
    let max_gap = m.iter().copied().fold(0.0, f64::max);
    // Without drift every weight is 1 and the sums must agree exactly.
    let pass = if spec.is_zero() {
        max_gap == 0.0
    } else {
        slope <= 0.0 && m[m.len() - 1] <= m[0]
    };
    let mut report = TestReport::new("riemann_convergence", slope, 0.0, Some(pass));
    for (l, (cells, e)) in cfg.levels.iter().zip(&means).enumerate() {
        report
            .diagnostic(&format!("gap_{l}"), e.mean)
            .diagnostic(&format!("gap_{l}_se"), e.std_error)
            .diagnostic(&format!("cells_{l}"), *cells as f64);
    }
    report.diagnostic("max_gap", max_gap);
    report
        .param("drift", spec.label())
        .param("x", cfg.x)
        .param("t", grid.horizon())
        .param("dt", grid.dt())
        .param("levels", format!("{:?}", cfg.levels))
        .param("reference_cells", r_cells)
        .param("n_outer", cfg.n_outer)
        .param("n_inner", cfg.n_inner);
    Ok(report.with_seed(stream.seed()))
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
fn trend_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (num, den) = ys.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, y)| {
        let dx = i as f64 - mx;
        (a + dx * (y - my), b + dx * dx)
    });
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(levels: Vec<usize>) -> RiemannConfig {
        RiemannConfig {
            x: 1.0,
            grid: TimeGrid::new(1e-2, 20).unwrap(),
            levels,
            reference_cells: 16,
            n_outer: 4,
            n_inner: 3,
        }
    }

    #[test]
    fn slope() {
        assert_eq!(trend_slope(&[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(trend_slope(&[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn guard_and_zero_drift() {
        let r =
            riemann_convergence(&DriftSpec::zero(), &cfg(vec![4]), NoiseStream::new(1)).unwrap();
        assert_eq!(r.note.as_deref(), Some("insufficient levels"));
        let r = riemann_convergence(
            &DriftSpec::zero(),
            &cfg(vec![4, 8, 16]),
            NoiseStream::new(1),
        )
        .unwrap();
        assert_eq!(r.diagnostics["max_gap"], 0.0);
        assert_eq!(r.pass, Some(true));
        assert!(riemann_convergence(
            &DriftSpec::zero(),
            &cfg(vec![3, 8, 16]),
            NoiseStream::new(1)
        )
        .is_err());
    }
}
