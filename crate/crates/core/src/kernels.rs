//! Kernels for square-root diffusions `dX = b(t, X) dt + 2 sqrt(X) dB`:
//! full-truncation Euler, a split scheme built on the exact critical
//! transition, and the exact transition sampler for the linear drift.

use crate::error::{Error, Result};
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::{NoiseStream, Sampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroPolicy {
    /// Zero is absorbing: the path is frozen once it reaches 0.
    Absorb,
    /// Truncate at 0 but keep stepping (immigration keeps the path alive).
    ReflectFree,
}

/// One full-truncation Euler step of `dX = drift dt + 2 sqrt(X) dB`.
#[inline]
pub fn step_sqrt(z: f64, drift: f64, dt: f64, gaussian: f64, policy: ZeroPolicy) -> f64 {
    if z == 0.0 && policy == ZeroPolicy::Absorb {
        return 0.0;
    }
    (z + drift * dt + 2.0 * (z * dt).sqrt() * gaussian).max(0.0)
}

/// Time-stepping rule for absorbing square-root diffusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Full-truncation Euler ([`step_sqrt`]).
    Euler,
    /// Exact critical transition followed by the explicit drift
    /// ([`step_split`]). Paths started at small values keep the right
    /// survival probability and mean, which truncated Euler steps do not.
    #[default]
    Split,
}

/// Exact step of `dX = 2 sqrt(X) dB` (compound Poisson-Exponential), then
/// `drift * dt` added and truncated at 0. Under [`ZeroPolicy::Absorb`] a
/// path that reaches 0 in the critical step stays there.
#[inline]
pub fn step_split(z: f64, drift: f64, dt: f64, rng: &mut Sampler, policy: ZeroPolicy) -> f64 {
    let base = if z > 0.0 {
        sample_critical_step(z, dt, rng)
    } else {
        0.0
    };
    if base == 0.0 && policy == ZeroPolicy::Absorb {
        return 0.0;
    }
    (base + drift * dt).max(0.0)
}

fn sample_critical_step(z: f64, dt: f64, rng: &mut Sampler) -> f64 {
    sample_linear_exact(z, 0.0, dt, rng).expect("positive state and step")
}

/// Drive a path from `x0` at grid index `onset`. `drift(k, x)` is evaluated
/// at the left endpoint of step `k`; `policy(k)` decides whether a zero at
/// index `k` is absorbing. Stops storing at absorption.
pub(crate) fn integrate(
    grid: TimeGrid,
    onset: usize,
    x0: f64,
    rng: &mut Sampler,
    scheme: Scheme,
    mut drift: impl FnMut(usize, f64) -> f64,
    mut policy: impl FnMut(usize) -> ZeroPolicy,
) -> SamplePath {
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(n + 1 - onset);
    let mut z = x0.max(0.0);
    values.push(z);
    for k in onset..n {
        let pol = policy(k);
        if z == 0.0 && pol == ZeroPolicy::Absorb {
            return SamplePath::from_raw(grid, onset, values, Some(k));
        }
        let b = drift(k, z);
        z = match scheme {
            Scheme::Euler => step_sqrt(z, b, dt, rng.gaussian(), pol),
            Scheme::Split => step_split(z, b, dt, rng, pol),
        };
        values.push(z);
    }
    let absorbed = (z == 0.0 && policy(n) == ZeroPolicy::Absorb).then_some(n);
    SamplePath::from_raw(grid, onset, values, absorbed)
}

/// Euler path of `dZ = f(Z) dt + 2 sqrt(Z) dB` from `x`, absorbed at 0.
pub fn simulate_z(
    x: f64,
    spec: &DriftSpec,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<SamplePath> {
    spec.check_simulable()?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "initial mass must be >= 0, got {x}"
        )));
    }
    let mut rng = stream.rng();
    Ok(integrate(
        grid,
        0,
        x,
        &mut rng,
        Scheme::Euler,
        |_, z| spec.eval(z),
        |_| ZeroPolicy::Absorb,
    ))
}

/// Parameters of the compound Poisson-Exponential law of `Y_t` for
/// `dY = theta Y dt + 2 sqrt(Y) dB`, `Y_0 = x`: `Y_t` is a sum of
/// `Poisson(x * rate)` exponentials with mean `mean`.
///
/// From the log-Laplace flow `u' = theta u - 2 u^2`:
/// `u_t(lambda) = rate * (1 - 1/(1 + lambda * mean))` with
/// `mean = 2 (e^{theta t} - 1) / theta` and `rate = e^{theta t} / mean`.
pub fn linear_transition_params(theta: f64, t: f64) -> (f64, f64) {
    let mean = if theta == 0.0 {
        2.0 * t
    } else {
        2.0 * (theta * t).exp_m1() / theta
    };
    let rate = (theta * t).exp() / mean;
    (rate, mean)
}

/// Exact draw of `Y_t` for the linear drift `f(z) = theta z`.
pub fn simulate_linear_exact(x: f64, theta: f64, t: f64, stream: NoiseStream) -> Result<f64> {
    let mut rng = stream.rng();
    sample_linear_exact(x, theta, t, &mut rng)
}

pub fn sample_linear_exact(x: f64, theta: f64, t: f64, rng: &mut Sampler) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let (rate, mean) = linear_transition_params(theta, t);
    let count = rng.poisson(x * rate);
    if count <= 64 {
        Ok((0..count).map(|_| rng.exponential(mean)).sum())
    } else {
        use rand::Rng;
        let gamma = rand_distr::Gamma::new(count as f64, mean).expect("positive shape and scale");
        Ok(rng.inner_mut().sample(gamma))
    }
}

/// Immigration diffusion `dU = 4 1{r < cutoff} dr + 2 sqrt(U) dB` from `y`.
/// Zero is reflecting while immigration is on and absorbing afterwards.
/// `cutoff = f64::INFINITY` gives the process conditioned to survive.
pub fn simulate_immigration(
    y: f64,
    cutoff: f64,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<SamplePath> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")));
    }
    if !(cutoff >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be >= 0, got {cutoff}"
        )));
    }
    let kc = cutoff_index(cutoff, grid);
    let mut rng = stream.rng();
    Ok(integrate(
        grid,
        0,
        y,
        &mut rng,
        Scheme::Euler,
        |k, _| if k < kc { 4.0 } else { 0.0 },
        |k| {
            if k < kc {
                ZeroPolicy::ReflectFree
            } else {
                ZeroPolicy::Absorb
            }
        },
    ))
}

pub(crate) fn cutoff_index(cutoff: f64, grid: TimeGrid) -> usize {
    if cutoff.is_infinite() {
        usize::MAX
    } else {
        (cutoff / grid.dt()).round() as usize
    }
}

/// Tilted immigration diffusion `dV = (4 + F(z_s, V)) ds + 2 sqrt(V) dB`.
pub fn simulate_tilted(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<SamplePath> {
    check_compatible(z, grid)?;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")));
    }
    let mut rng = stream.rng();
    Ok(integrate(
        grid,
        0,
        y,
        &mut rng,
        Scheme::Euler,
        |k, v| 4.0 + spec.increment(z.value(k), v),
        |_| ZeroPolicy::ReflectFree,
    ))
}

/// `z` must live on a grid with the same step that covers `grid`.
pub(crate) fn check_compatible(z: &SamplePath, grid: TimeGrid) -> Result<()> {
    let zg = z.grid();
    if zg.dt() != grid.dt() || zg.n_steps() < grid.n_steps() {
        return Err(Error::InvalidGrid(format!(
            "path grid (dt={}, n={}) does not cover simulation grid (dt={}, n={})",
            zg.dt(),
            zg.n_steps(),
            grid.dt(),
            grid.n_steps()
        )));
    }
    Ok(())
}

/// First grid time after the onset at which the path is zero.
pub fn extinction_time(path: &SamplePath) -> Option<f64> {
    let grid = path.grid();
    if let Some(k) = path.absorbed_at() {
        return Some(grid.time(k));
    }
    ((path.onset() + 1)..=grid.n_steps())
        .find(|&k| path.value(k) == 0.0)
        .map(|k| grid.time(k))
}
