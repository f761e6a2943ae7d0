//! Entrance-law sampling, the delta-slice approximation of the excursion
//! measure, the Poisson-field reconstruction of the interacting field and
//! the generator functional.
//!
//! The excursion measure `Q` is sigma-finite. At level `delta` only
//! excursions still alive at time `delta` are kept: per unit mass they arrive
//! at rate `1 / (2 delta)` and start from an exponential value with mean
//! `2 delta`. Excursions that die before `delta` contribute nothing at later
//! times.

use rayon::prelude::*;

use crate::coupling::MassField;
use crate::error::{Error, Result};
use crate::kernels::{check_compatible, integrate, simulate_immigration, Scheme, ZeroPolicy};
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::{NoiseStream, Sampler};
use crate::verification::{ks_one_sample, McEstimate, TestReport};

/// Smallest sample accepted by [`entrance_law_test`].
pub const MIN_ENTRANCE_SAMPLE: usize = 1000;

/// `Q_{0,t}`: immigration at rate 4 up to `t`, critical afterwards.
pub fn sample_entrance(t: f64, grid: TimeGrid, stream: NoiseStream) -> Result<SamplePath> {
    if !(t > 0.0 && t <= grid.horizon() * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "t must lie in (0, horizon], got {t}"
        )));
    }
    simulate_immigration(0.0, t, grid, stream)
}

/// CDF of the Gamma law with shape 2 and scale `s`.
pub fn gamma2_cdf(u: f64, s: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        let r = u / s;
        1.0 - (-r).exp() * (1.0 + r)
    }
}

/// One-sample KS test of `U_t` under `Q_{0,t}` against Gamma(2, 2t).
pub fn entrance_law_test(
    t: f64,
    n: usize,
    grid: TimeGrid,
    level: f64,
    stream: NoiseStream,
) -> Result<TestReport> {
    if n < MIN_ENTRANCE_SAMPLE {
        let mut r = TestReport::inconclusive("entrance_law", "insufficient sample");
        r.param("t", t).param("n", n);
        return Ok(r);
    }
    let k = grid.index_of(t)?;
    let short = grid.truncated(k)?;
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|r| sample_entrance(t, short, stream.child(r as u64)).map(|p| p.last()))
        .collect::<Result<_>>()?;
    let mut report =
        ks_one_sample(&samples, |u| gamma2_cdf(u, 2.0 * t), level)?.with_name("entrance_law");
    let mean = McEstimate::from_samples(&samples)?;
    report
        .param("t", t)
        .param("n", n)
        .param("dt", grid.dt())
        .diagnostic("mean", mean.mean)
        .diagnostic("mean_se", mean.std_error)
        .diagnostic("mean_expected", 4.0 * t);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaQConfig {
    delta: f64,
}

impl DeltaQConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rate_per_mass(&self) -> f64 {
        1.0 / (2.0 * self.delta)
    }

    pub fn seed_mean(&self) -> f64 {
        2.0 * self.delta
    }

    /// Grid index at which atoms enter; `delta` must be a grid time below the horizon.
    fn onset(&self, grid: TimeGrid) -> Result<usize> {
        if self.delta >= grid.horizon() {
            return Err(Error::InvalidArgument(format!(
                "delta = {} must be below the horizon {}",
                self.delta,
                grid.horizon()
            )));
        }
        grid.index_of(self.delta)
    }
}

/// One point of the excursion point process.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionAtom {
    pub xi: f64,
    pub birth_level: f64,
    pub path: SamplePath,
}

/// Grow an atom from `seed` at grid index `onset` with the split scheme,
/// drifted by `F(z_k, .)` when tilted. Atoms start at values of order
/// `delta`, where truncated Euler steps would add mass on every absorption.
fn grow(
    onset: usize,
    seed: f64,
    tilt: Option<(&DriftSpec, &[f64])>,
    grid: TimeGrid,
    rng: &mut Sampler,
) -> SamplePath {
    match tilt {
        Some((spec, z)) if !spec.is_zero() => integrate(
            grid,
            onset,
            seed,
            rng,
            Scheme::Split,
            |k, u| spec.increment(z[k], u),
            |_| ZeroPolicy::Absorb,
        ),
        _ => integrate(
            grid,
            onset,
            seed,
            rng,
            Scheme::Split,
            |_, _| 0.0,
            |_| ZeroPolicy::Absorb,
        ),
    }
}

/// Atoms of the delta-slice of `Q` (or of the tilted measure `L(z, u) Q(du)`)
/// on `[0, mass]`, sorted by `xi`.
pub fn sample_delta_excursions(
    cfg: DeltaQConfig,
    mass: f64,
    tilt: Option<(&DriftSpec, &SamplePath)>,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<Vec<ExcursionAtom>> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mass must be >= 0, got {mass}"
        )));
    }
    let onset = cfg.onset(grid)?;
    let env = match tilt {
        Some((spec, z)) => {
            spec.check_simulable()?;
            check_compatible(z, grid)?;
            Some((spec, z.dense()))
        }
        None => None,
    };
    let count = stream
        .fork("count")
        .rng()
        .poisson(mass * cfg.rate_per_mass());
    let mut atoms: Vec<ExcursionAtom> = (0..count)
        .map(|i| {
            let mut rng = stream.child(i).rng();
            let xi = mass * rng.uniform();
            let seed = rng.exponential(cfg.seed_mean());
            let path = grow(
                onset,
                seed,
                env.as_ref().map(|(s, z)| (*s, z.as_slice())),
                grid,
                &mut rng,
            );
            ExcursionAtom {
                xi,
                birth_level: seed,
                path,
            }
        })
        .collect();
    atoms.sort_by(|a, b| a.xi.total_cmp(&b.xi));
    Ok(atoms)
}

/// Sum of paths sharing a grid, as one absorbing path.
fn sum_paths<'a>(grid: TimeGrid, paths: impl Iterator<Item = &'a SamplePath>) -> SamplePath {
    let mut acc = vec![0.0; grid.n_steps() + 1];
    let mut onset = usize::MAX;
    for p in paths {
        p.add_into(&mut acc);
        onset = onset.min(p.onset());
    }
    if onset == usize::MAX {
        return SamplePath::zero(grid);
    }
    SamplePath::with_onset(grid, onset, acc).expect("sum of absorbing paths with a common onset")
}

/// Reconstructed field and the atoms that built it.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: MassField,
    pub atoms: Vec<ExcursionAtom>,
}

/// Build `x -> Z^x` on `[0, x_max]` from delta-atoms processed in increasing
/// `xi`; each atom is drifted by `F(Z^{xi-}, .)` where `Z^{xi-}` is the sum of
/// all earlier atoms. The field is reported on a uniform `xi` grid with
/// `cells` cells.
pub fn reconstruct_field(
    spec: &DriftSpec,
    x_max: f64,
    cells: usize,
    cfg: DeltaQConfig,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<Reconstruction> {
    spec.check_simulable()?;
    if !(x_max > 0.0 && x_max.is_finite()) || cells == 0 {
        return Err(Error::InvalidArgument(
            "need x_max > 0 and at least one cell".into(),
        ));
    }
    let onset = cfg.onset(grid)?;
    let count = stream
        .fork("count")
        .rng()
        .poisson(x_max * cfg.rate_per_mass());
    let mut xis: Vec<f64> = {
        let mut rng = stream.fork("xi").rng();
        (0..count).map(|_| x_max * rng.uniform()).collect()
    };
    xis.sort_by(f64::total_cmp);
    let mut running = vec![0.0; grid.n_steps() + 1];
    let mut atoms = Vec::with_capacity(xis.len());
    for (i, xi) in xis.into_iter().enumerate() {
        let mut rng = stream.child(i as u64).rng();
        let seed = rng.exponential(cfg.seed_mean());
        let path = grow(onset, seed, Some((spec, &running)), grid, &mut rng);
        path.add_into(&mut running);
        atoms.push(ExcursionAtom {
            xi,
            birth_level: seed,
            path,
        });
    }
    let x_grid: Vec<f64> = (0..=cells)
        .map(|k| x_max * k as f64 / cells as f64)
        .collect();
    let mut increments = Vec::with_capacity(cells);
    let mut start = 0;
    for k in 1..=cells {
        let upper = if k == cells { f64::INFINITY } else { x_grid[k] };
        let end = start + atoms[start..].iter().take_while(|a| a.xi < upper).count();
        increments.push(sum_paths(grid, atoms[start..end].iter().map(|a| &a.path)));
        start = end;
    }
    Ok(Reconstruction {
        field: MassField::from_increments(x_grid, grid, increments)?,
        atoms,
    })
}

/// Bounded nonnegative step function of time: `values[i]` on
/// `[breaks[i], breaks[i + 1])`, the last value extending to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() || breaks[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "step function needs matching breaks starting at 0".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "breaks must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "step values must be finite and >= 0".into(),
            ));
        }
        Ok(Self { breaks, values })
    }

    pub fn zero() -> Self {
        Self {
            breaks: vec![0.0],
            values: vec![0.0],
        }
    }

    /// `c` on `[0, end)`, zero afterwards.
    pub fn indicator(c: f64, end: f64) -> Result<Self> {
        Self::new(vec![0.0, end], vec![c, 0.0])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= t);
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// First time after which `g` vanishes (infinite if it never does).
    pub fn support_end(&self) -> f64 {
        match self.values.iter().rposition(|v| *v != 0.0) {
            None => 0.0,
            Some(i) if i + 1 < self.breaks.len() => self.breaks[i + 1],
            Some(_) => f64::INFINITY,
        }
    }

    /// Left-endpoint rectangle rule for `int g(t) u(t) dt` over the path's grid.
    pub fn pairing(&self, u: &SamplePath) -> f64 {
        let grid = u.grid();
        let end = u.support_end().min(grid.n_steps());
        (u.onset()..end)
            .map(|k| self.eval(grid.time(k)) * u.value(k))
            .sum::<f64>()
            * grid.dt()
    }

    /// `Phi_g(z) = exp(-<g, z>)`.
    pub fn laplace(&self, z: &SamplePath) -> f64 {
        (-self.pairing(z)).exp()
    }
}

/// Per-atom samples `exp(-<g, u>) - 1` for tilted delta-atoms against `z`.
pub(crate) fn generator_samples(
    spec: &DriftSpec,
    g: &StepFunction,
    z: &[f64],
    cfg: DeltaQConfig,
    n: usize,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<Vec<f64>> {
    if g.is_zero() {
        return Ok(vec![0.0; n]);
    }
    let onset = cfg.onset(grid)?;
    let end = match g.support_end() {
        e if e.is_finite() && e < grid.horizon() => grid
            .index_of(e)
            .unwrap_or_else(|_| (e / grid.dt()).ceil() as usize),
        _ => grid.n_steps(),
    };
    let short = grid.truncated(end.max(onset + 1))?;
    Ok((0..n)
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let seed = rng.exponential(cfg.seed_mean());
            let path = grow(onset, seed, Some((spec, z)), short, &mut rng);
            (-g.pairing(&path)).exp_m1()
        })
        .collect())
}

/// Estimate of the generator `Phi_g(z) int (e^{-<g,u>} - 1) L(z, u) Q(du)`
/// from `n` tilted delta-atoms.
pub fn generator_applied(
    spec: &DriftSpec,
    g: &StepFunction,
    z: &SamplePath,
    cfg: DeltaQConfig,
    n: usize,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<McEstimate> {
    spec.check_simulable()?;
    check_compatible(z, grid)?;
    let dense = z.dense();
    let xs = generator_samples(spec, g, &dense, cfg, n, grid, stream)?;
    Ok(McEstimate::from_samples(&xs)?.scaled(g.laplace(z) * cfg.rate_per_mass()))
}
