//! Radon-Nikodym weights between the drifted increment law and the critical
//! Feller law, and the Monte Carlo checks of the measure-change identities.
//!
//! Along a path `u` and a fixed environment `z`, with `r_s = F(z_s, u_s) / u_s`
//! (zero where `u_s = 0`):
//!
//! ```text
//! log L_t = 1/4 sum r_k (u_{k+1} - u_k) - 1/8 sum r_k^2 u_k dt
//! log G_t = 1/4 sum r_k (u_{k+1} - u_k - 4 dt) - 1/8 sum r_k^2 u_k dt
//! log L_t = log G_t + sum r_k dt
//! ```
//!
//! Sums use left endpoints, matching the Ito integrals.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{check_compatible, cutoff_index, step_sqrt, Scheme, ZeroPolicy};
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::{NoiseStream, Sampler};
use crate::verification::{McEstimate, DEFAULT_Z};

/// Paths whose running log-weight falls below this are stopped; by optional
/// stopping their remaining contribution to any weighted mean is below e^-50.
pub const NEGLIGIBLE_LOG_WEIGHT: f64 = -50.0;

/// Largest tolerated fraction of horizon-capped paths.
pub const MAX_CAPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightResult {
    pub log_l: f64,
    pub log_g: f64,
    /// `1/4 sum r dU`
    pub stochastic_integral: f64,
    /// `1/8 sum r^2 U dt`
    pub quadratic_term: f64,
    /// `sum r dt`
    pub correction: f64,
    pub steps: usize,
}

impl WeightResult {
    pub fn l(&self) -> f64 {
        self.log_l.exp()
    }

    pub fn g(&self) -> f64 {
        self.log_g.exp()
    }

    /// `log L - log G - correction`, zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.log_l - self.log_g - self.correction
    }
}

/// Where to stop the weight integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightHorizon {
    At(f64),
    /// Up to the extinction time of `u`; fails if `u` is never absorbed.
    Extinction,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    stoch: f64,
    quad: f64,
    corr: f64,
    steps: usize,
}

impl Accumulator {
    #[inline]
    fn step(&mut self, spec: &DriftSpec, z: f64, u: f64, du: f64, dt: f64) {
        if u > 0.0 {
            let r = spec.increment_ratio(z, u);
            self.stoch += 0.25 * r * du;
            self.quad += 0.125 * r * r * u * dt;
            self.corr += r * dt;
        }
        self.steps += 1;
    }

    #[inline]
    fn log_l(&self) -> f64 {
        self.stoch - self.quad
    }

    fn finish(&self) -> WeightResult {
        let log_l = self.stoch - self.quad;
        // 1/4 sum r (dU - 4 dt) = stoch - corr
        let log_g = self.stoch - self.corr - self.quad;
        WeightResult {
            log_l,
            log_g,
            stochastic_integral: self.stoch,
            quadratic_term: self.quad,
            correction: self.corr,
            steps: self.steps,
        }
    }
}

/// `|F(z, u)| / sqrt(u) <= C_z` on steps with `u <= 1`.
fn check_holder(spec: &DriftSpec, z: f64, u: f64) -> Result<()> {
    if u > 0.0 && u <= 1.0 {
        let ratio = spec.increment(z, u).abs() / u.sqrt();
        let bound = spec.holder_constant(z);
        if ratio > bound * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::HolderViolation { z, u, ratio, bound });
        }
    }
    Ok(())
}

/// Weights `L` and `G` of `u` against the environment `z`.
pub fn compute_weights(
    spec: &DriftSpec,
    z: &SamplePath,
    u: &SamplePath,
    horizon: WeightHorizon,
) -> Result<WeightResult> {
    let grid = u.grid();
    check_compatible(z, grid)?;
    let end = match horizon {
        WeightHorizon::At(t) if t.is_infinite() => {
            u.absorbed_at().ok_or(Error::ExtinctionNotReached)?
        }
        WeightHorizon::At(t) => grid.index_of(t)?,
        WeightHorizon::Extinction => u.absorbed_at().ok_or(Error::ExtinctionNotReached)?,
    };
    let dt = grid.dt();
    let mut acc = Accumulator::default();
    let mut prev = u.value(0);
    for k in 0..end.min(u.support_end()) {
        let next = u.value(k + 1);
        check_holder(spec, z.value(k), prev)?;
        acc.step(spec, z.value(k), prev, next - prev, dt);
        prev = next;
    }
    acc.steps = end;
    Ok(acc.finish())
}

/// How a fused simulate-and-weigh run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Absorbed,
    Negligible,
    Capped,
    Reached,
}

struct WeightedRun {
    weights: WeightResult,
    recorded: f64,
    stop: Stop,
}

/// Simulate `dU = 4 1{k < cutoff} dt + 2 sqrt(U) dB` from `y` while
/// accumulating weights against `z`, recording `U` at `record`.
/// With `to_extinction`, runs past `record` until absorption, a negligible
/// weight, or the end of the grid.
#[allow(clippy::too_many_arguments)]
fn weighted_run(
    spec: &DriftSpec,
    z: &[f64],
    y: f64,
    cutoff: usize,
    record: usize,
    to_extinction: bool,
    grid: TimeGrid,
    rng: &mut Sampler,
) -> Result<WeightedRun> {
    let dt = grid.dt();
    let end = if to_extinction {
        grid.n_steps()
    } else {
        record
    };
    let mut acc = Accumulator::default();
    let mut u = y;
    let mut recorded = if record == 0 { u } else { 0.0 };
    let mut stop = Stop::Reached;
    for k in 0..end {
        let policy = if k < cutoff {
            ZeroPolicy::ReflectFree
        } else {
            ZeroPolicy::Absorb
        };
        if u == 0.0 && policy == ZeroPolicy::Absorb {
            stop = Stop::Absorbed;
            break;
        }
        if to_extinction && k >= record && acc.log_l() < NEGLIGIBLE_LOG_WEIGHT {
            stop = Stop::Negligible;
            break;
        }
        check_holder(spec, z[k], u)?;
        let drift = if k < cutoff { 4.0 } else { 0.0 };
        let next = step_sqrt(u, drift, dt, rng.gaussian(), policy);
        acc.step(spec, z[k], u, next - u, dt);
        u = next;
        if k + 1 == record {
            recorded = u;
        }
    }
    if stop == Stop::Reached && to_extinction {
        stop = if u == 0.0 {
            Stop::Absorbed
        } else {
            Stop::Capped
        };
    }
    Ok(WeightedRun {
        weights: acc.finish(),
        recorded,
        stop,
    })
}

/// Dense environment covering `grid`.
fn environment(z: &SamplePath, grid: TimeGrid) -> Result<Vec<f64>> {
    check_compatible(z, grid)?;
    Ok((0..=grid.n_steps()).map(|k| z.value(k)).collect())
}

fn check_y(y: f64) -> Result<()> {
    if y >= 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")))
    }
}

/// Two Monte Carlo estimates of the two sides of an identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub params: std::collections::BTreeMap<String, String>,
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub n: usize,
    pub capped_fraction: f64,
    pub negligible_fraction: f64,
    /// `|lhs - rhs| / sqrt(se_lhs^2 + se_rhs^2)`
    pub z_distance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(
        identity: &str,
        lhs: McEstimate,
        rhs: McEstimate,
        capped: usize,
        negligible: usize,
    ) -> Self {
        let n = lhs.n.max(rhs.n);
        let capped_fraction = capped as f64 / n as f64;
        let z_distance = lhs.z_distance(&rhs);
        Self {
            identity: identity.to_string(),
            params: Default::default(),
            lhs,
            rhs,
            n,
            capped_fraction,
            negligible_fraction: negligible as f64 / n as f64,
            z_distance,
            pass: z_distance <= DEFAULT_Z && capped_fraction <= MAX_CAPPED_FRACTION,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

/// Common inputs for the identity checks: the grid's horizon doubles as the
/// cap for runs that must reach extinction.
#[derive(Debug, Clone, Copy)]
pub struct CheckSetup {
    pub grid: TimeGrid,
    pub t: f64,
    pub n: usize,
}

impl CheckSetup {
    fn t_index(&self) -> Result<usize> {
        let k = self.grid.index_of(self.t)?;
        if k == 0 {
            return Err(Error::InvalidArgument("t must be positive".into()));
        }
        Ok(k)
    }
}

fn tally(runs: &[WeightedRun]) -> (usize, usize) {
    let capped = runs.iter().filter(|r| r.stop == Stop::Capped).count();
    let negligible = runs.iter().filter(|r| r.stop == Stop::Negligible).count();
    (capped, negligible)
}

/// `E[V_t | z] = E[L(z, U) U_t]`: the left side simulates the drifted
/// increment from `y`, the right side weights critical Feller paths from `y`
/// up to their extinction (capped by the grid horizon).
pub fn check_identity_48(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    setup: CheckSetup,
    stream: NoiseStream,
) -> Result<IdentityCheck> {
    spec.check_simulable()?;
    check_y(y)?;
    let ti = setup.t_index()?;
    let env = environment(z, setup.grid)?;
    let short = setup.grid.truncated(ti)?;
    let lhs: Vec<f64> = (0..setup.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.fork("lhs").child(r as u64).rng();
            crate::kernels::integrate(
                short,
                0,
                y,
                &mut rng,
                Scheme::Euler,
                |k, v| spec.increment(env[k], v),
                |_| ZeroPolicy::Absorb,
            )
            .last()
        })
        .collect();
    let runs: Vec<WeightedRun> = (0..setup.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.fork("rhs").child(r as u64).rng();
            weighted_run(spec, &env, y, 0, ti, true, setup.grid, &mut rng)
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<f64> = runs.iter().map(|r| r.weights.l() * r.recorded).collect();
    let (capped, negligible) = tally(&runs);
    Ok(IdentityCheck::new(
        "increment_expectation",
        McEstimate::from_samples(&lhs)?,
        McEstimate::from_samples(&rhs)?,
        capped,
        negligible,
    ))
}

/// `phi(t) = E_{Q_{y,inf}}[L_t(z, U)]` with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiEstimate {
    pub phi: McEstimate,
    /// Mean of `G_t`, which should be 1.
    pub g_mean: McEstimate,
    /// `(mean w)^2 / mean(w^2)` for the weights `L_t`; 1 means no degeneracy.
    pub ess_fraction: f64,
}

fn ess_fraction(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    let m2 = w.iter().map(|x| x * x).sum::<f64>() / n;
    if m2 > 0.0 {
        m * m / m2
    } else {
        1.0
    }
}

pub fn estimate_phi(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    setup: CheckSetup,
    stream: NoiseStream,
) -> Result<PhiEstimate> {
    check_y(y)?;
    let ti = setup.t_index()?;
    let env = environment(z, setup.grid)?;
    let runs: Vec<WeightResult> = (0..setup.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.child(r as u64).rng();
            weighted_run(spec, &env, y, usize::MAX, ti, false, setup.grid, &mut rng)
                .map(|w| w.weights)
        })
        .collect::<Result<_>>()?;
    let l: Vec<f64> = runs.iter().map(WeightResult::l).collect();
    let g: Vec<f64> = runs.iter().map(WeightResult::g).collect();
    Ok(PhiEstimate {
        phi: McEstimate::from_samples(&l)?,
        g_mean: McEstimate::from_samples(&g)?,
        ess_fraction: ess_fraction(&l),
    })
}

/// Sequential inner estimator used by nested (outer x inner) tests:
/// sample mean and variance of `L_t(z, U)`, `U ~ Q_{y,inf}`.
pub(crate) fn phi_inner(
    spec: &DriftSpec,
    z: &[f64],
    y: f64,
    t_index: usize,
    grid: TimeGrid,
    n: usize,
    stream: NoiseStream,
) -> Result<(f64, f64)> {
    if spec.is_zero() {
        // L is identically one
        return Ok((1.0, 0.0));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for r in 0..n {
        let mut rng = stream.child(r as u64).rng();
        let w = weighted_run(spec, z, y, usize::MAX, t_index, false, grid, &mut rng)?
            .weights
            .l();
        sum += w;
        sum_sq += w * w;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

/// `E_{Q_{y,t}}[L(z, U)] = E_{Q_{y,inf}}[L_t(z, U)]`. The left side runs the
/// immigration diffusion with cutoff `t` to extinction.
pub fn check_lemma43(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    setup: CheckSetup,
    stream: NoiseStream,
) -> Result<IdentityCheck> {
    check_y(y)?;
    let ti = setup.t_index()?;
    let env = environment(z, setup.grid)?;
    let kc = cutoff_index(setup.t, setup.grid);
    let runs: Vec<WeightedRun> = (0..setup.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.fork("lhs").child(r as u64).rng();
            weighted_run(spec, &env, y, kc, ti, true, setup.grid, &mut rng)
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = runs.iter().map(|r| r.weights.l()).collect();
    let (capped, negligible) = tally(&runs);
    let rhs = estimate_phi(spec, z, y, setup, stream.fork("rhs"))?;
    Ok(IdentityCheck::new(
        "cutoff_invariance",
        McEstimate::from_samples(&lhs)?,
        rhs.phi,
        capped,
        negligible,
    ))
}

/// `E_{Q_{y,inf}}[L_t(z, U)] = E[exp(int_0^t F(z_s, V_s)/V_s ds)]` with `V` the
/// tilted immigration diffusion.
pub fn check_lemma44(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    setup: CheckSetup,
    stream: NoiseStream,
) -> Result<IdentityCheck> {
    check_y(y)?;
    let ti = setup.t_index()?;
    let env = environment(z, setup.grid)?;
    let lhs = estimate_phi(spec, z, y, setup, stream.fork("lhs"))?;
    let dt = setup.grid.dt();
    let rhs: Vec<f64> = (0..setup.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.fork("rhs").child(r as u64).rng();
            let mut v = y;
            let mut integral = 0.0;
            for k in 0..ti {
                let ratio = spec.increment_ratio(env[k], v);
                integral += ratio * dt;
                v = step_sqrt(
                    v,
                    4.0 + ratio * v,
                    dt,
                    rng.gaussian(),
                    ZeroPolicy::ReflectFree,
                );
            }
            integral.exp()
        })
        .collect();
    Ok(IdentityCheck::new(
        "tilted_representation",
        lhs.phi,
        McEstimate::from_samples(&rhs)?,
        0,
        0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::simulate_immigration;
    use crate::model::{make_drift, DriftKind};

    fn logistic(theta: f64, gamma: f64) -> DriftSpec {
        make_drift(DriftKind::Logistic, &[theta, gamma]).unwrap()
    }

    #[test]
    fn zero_drift_has_unit_weights() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let u = simulate_immigration(0.3, f64::INFINITY, grid, NoiseStream::new(1)).unwrap();
        let w = compute_weights(&DriftSpec::zero(), &z, &u, WeightHorizon::At(1.0)).unwrap();
        assert_eq!((w.log_l, w.log_g), (0.0, 0.0));
    }

    #[test]
    fn linear_weights_match_closed_form() {
        // F(a, b) = theta b: log L = theta/4 (U_t - U_0) - theta^2/8 sum U dt,
        // summed here by an independent loop over the dense path.
        let theta = 0.7;
        let spec = make_drift(DriftKind::Linear, &[theta]).unwrap();
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let z = SamplePath::constant(grid, 2.0).unwrap();
        for r in 0..5 {
            let u = simulate_immigration(0.5, f64::INFINITY, grid, NoiseStream::new(2).child(r))
                .unwrap();
            let w = compute_weights(&spec, &z, &u, WeightHorizon::At(1.0)).unwrap();
            let dense = u.dense();
            let riemann: f64 = dense[..1000].iter().map(|x| x * 1e-3).sum();
            let expected = theta / 4.0 * (dense[1000] - dense[0]) - theta * theta / 8.0 * riemann;
            assert!(
                (w.log_l - expected).abs() < 1e-10,
                "{} vs {expected}",
                w.log_l
            );
        }
    }

    #[test]
    fn weights_freeze_after_extinction() {
        let spec = logistic(1.0, 1.0);
        let grid = TimeGrid::new(1e-3, 4000).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let mut seen = 0;
        for r in 0..50 {
            let u = simulate_immigration(0.2, 0.0, grid, NoiseStream::new(3).child(r)).unwrap();
            let Some(k) = u.absorbed_at() else { continue };
            if k + 10 > grid.n_steps() {
                continue;
            }
            seen += 1;
            let at_zeta = compute_weights(&spec, &z, &u, WeightHorizon::Extinction).unwrap();
            for t in [grid.time(k), grid.time(k + 5), grid.horizon()] {
                let w = compute_weights(&spec, &z, &u, WeightHorizon::At(t)).unwrap();
                assert_eq!(w.log_l, at_zeta.log_l);
            }
            let inf = compute_weights(&spec, &z, &u, WeightHorizon::At(f64::INFINITY)).unwrap();
            assert_eq!(inf.log_l, at_zeta.log_l);
        }
        assert!(seen > 10);
    }

    #[test]
    fn extinction_horizon_requires_absorption() {
        let grid = TimeGrid::new(1e-2, 10).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let u = SamplePath::constant(grid, 1.0).unwrap();
        assert_eq!(
            compute_weights(&logistic(1.0, 1.0), &z, &u, WeightHorizon::Extinction),
            Err(Error::ExtinctionNotReached)
        );
    }

    #[test]
    fn identity_residual_is_rounding_only() {
        let spec = logistic(1.0, 0.5);
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let z = SamplePath::constant(grid, 1.5).unwrap();
        for r in 0..20 {
            let u = simulate_immigration(0.0, f64::INFINITY, grid, NoiseStream::new(4).child(r))
                .unwrap();
            let w = compute_weights(&spec, &z, &u, WeightHorizon::At(1.0)).unwrap();
            assert!(w.identity_residual().abs() <= 1e-8 * w.steps as f64);
        }
    }

    #[test]
    fn holder_violation_is_an_error() {
        // declared C_M far too small for f(z) = -3 sqrt(z)
        let spec = DriftSpec::from_fn("sqrt", |z: f64| -3.0 * z.sqrt(), 0.0, &[0.1]).unwrap();
        let grid = TimeGrid::new(1e-2, 100).unwrap();
        let z = SamplePath::constant(grid, 0.0).unwrap();
        let u = simulate_immigration(0.5, f64::INFINITY, grid, NoiseStream::new(5)).unwrap();
        let z = SamplePath::from_values(grid, z.dense(), false).unwrap();
        assert!(matches!(
            compute_weights(&spec, &z, &u, WeightHorizon::At(1.0)),
            Err(Error::HolderViolation { .. })
        ));
    }

    #[test]
    fn phi_is_one_without_drift() {
        let grid = TimeGrid::new(1e-3, 500).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let setup = CheckSetup {
            grid,
            t: 0.5,
            n: 200,
        };
        let p = estimate_phi(&DriftSpec::zero(), &z, 0.2, setup, NoiseStream::new(6)).unwrap();
        assert_eq!(p.phi.mean, 1.0);
        assert_eq!(p.phi.std_error, 0.0);
        assert_eq!(p.ess_fraction, 1.0);
    }

    #[test]
    fn zero_drift_identities_trivially_agree() {
        let grid = TimeGrid::with_horizon(1e-3, 20.0).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let setup = CheckSetup {
            grid,
            t: 0.5,
            n: 2000,
        };
        let spec = DriftSpec::zero();
        let c = check_identity_48(&spec, &z, 0.2, setup, NoiseStream::new(7)).unwrap();
        assert!(c.pass, "{c:?}");
        assert!((c.lhs.mean - 0.2).abs() < 3.0 * c.lhs.std_error);
        let c = check_lemma43(&spec, &z, 0.5, setup, NoiseStream::new(7)).unwrap();
        assert_eq!((c.lhs.mean, c.rhs.mean), (1.0, 1.0));
        let c = check_lemma44(&spec, &z, 0.5, setup, NoiseStream::new(7)).unwrap();
        assert_eq!((c.lhs.mean, c.rhs.mean), (1.0, 1.0));
    }

    #[test]
    fn tiny_y_gives_tiny_estimates() {
        let grid = TimeGrid::with_horizon(1e-3, 5.0).unwrap();
        let z = SamplePath::constant(grid, 1.0).unwrap();
        let setup = CheckSetup {
            grid,
            t: 0.5,
            n: 500,
        };
        let c =
            check_identity_48(&logistic(1.0, 1.0), &z, 1e-9, setup, NoiseStream::new(8)).unwrap();
        assert!(c.lhs.mean < 1e-6 && c.rhs.mean < 1e-6);
    }
}
