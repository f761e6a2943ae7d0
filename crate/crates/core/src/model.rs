//! Drift functions, their admissibility conditions, and the path/grid types
//! shared by every simulator.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::NoiseStream;

/// Relative slack used when probing the algebraic drift inequalities.
pub const PROBE_RTOL: f64 = 1e-12;

/// Upper integration bound for the heuristic extinction-condition check.
pub const EXTINCTION_PROBE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftKind {
    Linear,
    Logistic,
    Allee,
    Custom,
}

impl DriftKind {
    pub fn name(self) -> &'static str {
        match self {
            DriftKind::Linear => "linear",
            DriftKind::Logistic => "logistic",
            DriftKind::Allee => "allee",
            DriftKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for DriftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(DriftKind::Linear),
            "logistic" => Ok(DriftKind::Logistic),
            "allee" => Ok(DriftKind::Allee),
            "custom" => Ok(DriftKind::Custom),
            other => Err(Error::InvalidDrift(format!("unknown drift kind `{other}`"))),
        }
    }
}

#[derive(Clone)]
enum DriftFn {
    Linear {
        theta: f64,
    },
    Logistic {
        theta: f64,
        gamma: f64,
    },
    /// f(z) = -a z + b z^2 - c z^3
    Cubic {
        a: f64,
        b: f64,
        c: f64,
    },
    /// f(z) = sum_i coeffs[i] z^(i+1)
    Polynomial(Vec<f64>),
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl DriftFn {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        match self {
            DriftFn::Linear { theta } => theta * z,
            DriftFn::Logistic { theta, gamma } => theta * z - gamma * z * z,
            DriftFn::Cubic { a, b, c } => z * (-a + z * (b - c * z)),
            DriftFn::Polynomial(coeffs) => z * horner(coeffs, z),
            DriftFn::Closure(f) => f(z),
        }
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// An interaction drift `f` together with the constants of its standing
/// assumptions: `theta` bounds the increments `f(a+b) - f(a) <= theta * b`,
/// and `holder_constant(M)` bounds `|f(a+b) - f(a)| <= C_M sqrt(b)` for
/// `a <= M`, `b <= 1`.
#[derive(Clone)]
pub struct DriftSpec {
    kind: DriftKind,
    params: Vec<f64>,
    theta: f64,
    /// C_M as a polynomial in M.
    holder: Vec<f64>,
    label: String,
    f: DriftFn,
    increments_bounded: bool,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("theta", &self.theta)
            .field("label", &self.label)
            .finish()
    }
}

fn check_finite(params: &[f64]) -> Result<()> {
    if params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidDrift("parameters must be finite".into()))
    }
}

fn expect_len(kind: DriftKind, params: &[f64], n: usize) -> Result<()> {
    if params.len() == n {
        Ok(())
    } else {
        Err(Error::InvalidDrift(format!(
            "{} drift takes {n} parameter(s), got {}",
            kind.name(),
            params.len()
        )))
    }
}

/// Build one of the built-in drifts.
///
/// * `linear`: `[theta]`, `f(z) = theta z`, `theta >= 0`.
/// * `logistic`: `[theta, gamma]`, `f(z) = theta z - gamma z^2`, `gamma >= 0`.
/// * `allee`: `[r, A, K]`, `f(z) = r z (z/A - 1)(1 - z/K)`, `r > 0`, `0 < A < K`.
///
/// Custom drifts need caller-supplied constants; see [`DriftSpec::polynomial`]
/// and [`DriftSpec::from_fn`].
pub fn make_drift(kind: DriftKind, params: &[f64]) -> Result<DriftSpec> {
    check_finite(params)?;
    match kind {
        DriftKind::Linear => {
            expect_len(kind, params, 1)?;
            let theta = params[0];
            if theta < 0.0 {
                return Err(Error::InvalidDrift("linear drift needs theta >= 0".into()));
            }
            Ok(DriftSpec {
                kind,
                params: params.to_vec(),
                theta,
                holder: vec![theta],
                label: format!("linear(theta={theta})"),
                f: DriftFn::Linear { theta },
                increments_bounded: true,
            })
        }
        DriftKind::Logistic => {
            expect_len(kind, params, 2)?;
            let (theta, gamma) = (params[0], params[1]);
            if gamma < 0.0 {
                return Err(Error::InvalidDrift(
                    "logistic drift needs gamma >= 0 (negative gamma is superlinear)".into(),
                ));
            }
            Ok(DriftSpec {
                kind,
                params: params.to_vec(),
                // f' = theta - 2 gamma z <= theta
                theta: theta.max(0.0),
                holder: vec![theta.abs() + gamma, 2.0 * gamma],
                label: format!("logistic(theta={theta},gamma={gamma})"),
                f: DriftFn::Logistic { theta, gamma },
                increments_bounded: true,
            })
        }
        DriftKind::Allee => {
            expect_len(kind, params, 3)?;
            let (r, lower, capacity) = (params[0], params[1], params[2]);
            if !(r > 0.0 && lower > 0.0 && capacity > lower) {
                return Err(Error::InvalidDrift(
                    "allee drift needs r > 0 and 0 < A < K".into(),
                ));
            }
            let a = r;
            let b = r * (1.0 / lower + 1.0 / capacity);
            let c = r / (lower * capacity);
            // sup f' = -a + b^2 / (3c), attained at z = b / (3c)
            let theta = (-a + b * b / (3.0 * c)).max(0.0);
            // sup_{[0, M+1]} |f'| <= a + 2b(M+1) + 3c(M+1)^2
            let holder = vec![a + 2.0 * b + 3.0 * c, 2.0 * b + 6.0 * c, 3.0 * c];
            Ok(DriftSpec {
                kind,
                params: params.to_vec(),
                theta,
                holder,
                label: format!("allee(r={r},A={lower},K={capacity})"),
                f: DriftFn::Cubic { a, b, c },
                increments_bounded: true,
            })
        }
        DriftKind::Custom => Err(Error::InvalidDrift(
            "custom drifts need a caller-supplied theta and Hoelder constant".into(),
        )),
    }
}

impl DriftSpec {
    /// The critical drift `f = 0`.
    pub fn zero() -> Self {
        make_drift(DriftKind::Linear, &[0.0]).expect("zero drift is valid")
    }

    /// Custom polynomial drift `f(z) = sum_i coeffs[i] z^(i+1)` (so `f(0) = 0`),
    /// with declared `theta` and `C_M = sum_j holder[j] M^j`.
    pub fn polynomial(coeffs: &[f64], theta: f64, holder: &[f64]) -> Result<Self> {
        check_finite(coeffs)?;
        check_finite(holder)?;
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::InvalidDrift(
                "declared theta must be finite and >= 0".into(),
            ));
        }
        let mut trimmed = coeffs.to_vec();
        while trimmed.last() == Some(&0.0) {
            trimmed.pop();
        }
        if trimmed.len() >= 2 && *trimmed.last().unwrap() > 0.0 {
            return Err(Error::InvalidDrift(
                "superlinear drift with positive leading coefficient: no finite theta exists"
                    .into(),
            ));
        }
        let label = format!("custom(poly={trimmed:?},theta={theta})");
        let mut spec = Self {
            kind: DriftKind::Custom,
            params: trimmed.clone(),
            theta,
            holder: holder.to_vec(),
            label,
            f: DriftFn::Polynomial(trimmed),
            increments_bounded: true,
        };
        spec.increments_bounded = spec.probe_one_sided();
        Ok(spec)
    }

    /// Custom drift from an arbitrary function. `f(0)` must be exactly 0.
    pub fn from_fn(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta: f64,
        holder: &[f64],
    ) -> Result<Self> {
        if f(0.0) != 0.0 {
            return Err(Error::InvalidDrift(
                "f(0) must be 0: immigration at the drift level is not supported".into(),
            ));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::InvalidDrift(
                "declared theta must be finite and >= 0".into(),
            ));
        }
        check_finite(holder)?;
        let mut spec = Self {
            kind: DriftKind::Custom,
            params: Vec::new(),
            theta,
            holder: holder.to_vec(),
            label: label.into(),
            f: DriftFn::Closure(Arc::new(f)),
            increments_bounded: true,
        };
        spec.increments_bounded = spec.probe_one_sided();
        Ok(spec)
    }

    fn probe_one_sided(&self) -> bool {
        let mut rng = NoiseStream::new(0x5eed).fork("construction-probe").rng();
        (0..2000).all(|_| {
            let a = 10.0 * rng.uniform();
            let b = 10.0 * (1.0 - rng.uniform());
            one_sided_margin(self, a, b) <= 0.0
        })
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.f.eval(z)
    }

    /// `F(a, b) = f(a + b) - f(a)`; `F(a, 0) = 0` exactly.
    #[inline]
    pub fn increment(&self, a: f64, b: f64) -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        match &self.f {
            // Closed forms avoid cancellation for the built-ins.
            DriftFn::Linear { theta } => theta * b,
            DriftFn::Logistic { theta, gamma } => theta * b - gamma * b * (2.0 * a + b),
            _ => self.f.eval(a + b) - self.f.eval(a),
        }
    }

    /// `F(a, b) / b` with the convention `F(a, 0) / 0 = 0`.
    #[inline]
    pub fn increment_ratio(&self, a: f64, b: f64) -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        match &self.f {
            DriftFn::Linear { theta } => *theta,
            DriftFn::Logistic { theta, gamma } => theta - gamma * (2.0 * a + b),
            _ => self.increment(a, b) / b,
        }
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `C_M` for the Hoelder-type bound on increments.
    pub fn holder_constant(&self, m: f64) -> f64 {
        horner(&self.holder, m)
    }

    /// Whether the drift is identically zero (the critical case).
    pub fn is_zero(&self) -> bool {
        match &self.f {
            DriftFn::Linear { theta } => *theta == 0.0,
            DriftFn::Logistic { theta, gamma } => *theta == 0.0 && *gamma == 0.0,
            DriftFn::Polynomial(c) => c.is_empty(),
            _ => false,
        }
    }

    /// Whether `f(z) = theta z` exactly.
    pub fn is_linear(&self) -> bool {
        match &self.f {
            DriftFn::Linear { .. } => true,
            DriftFn::Logistic { gamma, .. } => *gamma == 0.0,
            DriftFn::Polynomial(c) => c.len() <= 1,
            _ => false,
        }
    }

    pub(crate) fn check_simulable(&self) -> Result<()> {
        if self.increments_bounded {
            Ok(())
        } else {
            Err(Error::InadmissibleDrift(format!(
                "{}: f(a+b) - f(a) <= theta b fails for the declared theta",
                self.label
            )))
        }
    }
}

/// `F(a, b) - theta b`, minus the floating point slack.
fn one_sided_margin(spec: &DriftSpec, a: f64, b: f64) -> f64 {
    let fa = spec.eval(a);
    let fab = spec.eval(a + b);
    let excess = (fab - fa) - spec.theta * b;
    let scale = 1.0 + fab.abs() + fa.abs() + spec.theta * b;
    excess - PROBE_RTOL * scale
}

pub fn increment(spec: &DriftSpec, a: f64, b: f64) -> f64 {
    spec.increment(a, b)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    /// Worst observed excess over the bound (<= 0 when passing).
    pub margin: f64,
    pub probes: usize,
    pub worst_a: f64,
    pub worst_b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionCheck {
    /// Always heuristic: the integral is only evaluated up to `bound`.
    pub heuristic: bool,
    pub apparently_divergent: bool,
    pub bound: f64,
    /// log of the integrand times u, at sqrt(bound) and at bound.
    pub log_tail_mid: f64,
    pub log_tail_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub label: String,
    pub zero_at_origin: bool,
    pub one_sided_growth: ConditionCheck,
    pub holder: ConditionCheck,
    pub extinction: ExtinctionCheck,
    /// Informational: smallest probed `z0` beyond which `f(z) <= 2` on the
    /// probe grid (a sufficient condition for the extinction integral to diverge).
    pub bounded_by_two_beyond: Option<f64>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.zero_at_origin
            && self.one_sided_growth.passed
            && self.holder.passed
            && self.extinction.apparently_divergent
    }
}

/// Probe the standing assumptions on `n_probe` random `(a, b)` pairs.
pub fn validate_drift(
    spec: &DriftSpec,
    m: f64,
    n_probe: usize,
    stream: NoiseStream,
) -> ValidationReport {
    let n_probe = n_probe.max(1);
    let mut rng = stream.fork("validate").rng();

    let mut growth = ConditionCheck {
        passed: true,
        margin: f64::NEG_INFINITY,
        probes: n_probe,
        worst_a: 0.0,
        worst_b: 0.0,
    };
    let mut holder = growth.clone();
    let c_m = spec.holder_constant(m);

    for _ in 0..n_probe {
        let a = m * rng.uniform();
        let b = m * (1.0 - rng.uniform());
        let excess = (spec.eval(a + b) - spec.eval(a)) - spec.theta * b;
        if excess > growth.margin {
            growth.margin = excess;
            growth.worst_a = a;
            growth.worst_b = b;
        }
        if one_sided_margin(spec, a, b) > 0.0 {
            growth.passed = false;
        }

        let a = m * rng.uniform();
        let b = 1.0 - rng.uniform();
        let inc = (spec.eval(a + b) - spec.eval(a)).abs();
        let bound = c_m * b.sqrt();
        let excess = inc - bound;
        if excess > holder.margin {
            holder.margin = excess;
            holder.worst_a = a;
            holder.worst_b = b;
        }
        if excess > PROBE_RTOL * (1.0 + inc + bound) {
            holder.passed = false;
        }
    }

    ValidationReport {
        label: spec.label.clone(),
        zero_at_origin: spec.eval(0.0) == 0.0,
        one_sided_growth: growth,
        holder,
        extinction: extinction_heuristic(spec, EXTINCTION_PROBE_BOUND),
        bounded_by_two_beyond: bounded_by_two_beyond(spec, EXTINCTION_PROBE_BOUND),
    }
}

/// log of `u * exp(-1/2 int_1^u f(r)/r dr)`, computed via `r = e^s`.
fn log_tail(spec: &DriftSpec, u: f64) -> f64 {
    let upper = u.ln();
    let n = 4096; // even, for Simpson
    let h = upper / n as f64;
    let g = |s: f64| spec.eval(s.exp());
    let mut acc = g(0.0) + g(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(i as f64 * h);
    }
    let inner = acc * h / 3.0;
    upper - 0.5 * inner
}

/// The integrand of the extinction condition decays like `1/u` or slower iff
/// `u * integrand` does not collapse; compare it at `sqrt(bound)` and `bound`.
fn extinction_heuristic(spec: &DriftSpec, bound: f64) -> ExtinctionCheck {
    let mid = log_tail(spec, bound.sqrt());
    let end = log_tail(spec, bound);
    let divergent = end.is_nan() || end == f64::INFINITY || end >= mid - 1.0;
    ExtinctionCheck {
        heuristic: true,
        apparently_divergent: divergent,
        bound,
        log_tail_mid: mid,
        log_tail_end: end,
    }
}

fn bounded_by_two_beyond(spec: &DriftSpec, bound: f64) -> Option<f64> {
    let n = 2000;
    let zs: Vec<f64> = (0..=n)
        .map(|i| (bound.ln() * i as f64 / n as f64).exp())
        .collect();
    let last_violation = zs.iter().rposition(|&z| spec.eval(z) > 2.0);
    match last_violation {
        None => Some(zs[0]),
        Some(i) if i + 1 < zs.len() && zs[i + 1] <= bound / 10.0 => Some(zs[i + 1]),
        _ => None,
    }
}

/// Uniform time grid `0, dt, ..., n_steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid with step `dt` reaching at least `horizon`.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = (horizon / dt - 1e-9).ceil().max(1.0);
        Self::new(dt, n as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    /// Grid index of time `t`; errors unless `t` is within 1e-9 relative of a grid point.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0
            || k > self.n_steps as f64
            || (k * self.dt - t).abs() > 1e-9 * t.abs().max(self.dt)
        {
            return Err(Error::InvalidGrid(format!(
                "time {t} is not on the grid (dt = {}, horizon = {})",
                self.dt,
                self.horizon()
            )));
        }
        Ok(k as usize)
    }

    /// The same grid stopped after `n_steps` steps.
    pub fn truncated(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.dt, n_steps.min(self.n_steps))
    }
}

/// A nonnegative path on a [`TimeGrid`].
///
/// Values before `onset` are zero without counting as extinction (used for
/// excursions that enter at a positive time). Once `absorbed_at` is set the
/// path is zero from that index on and only the prefix is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    onset: usize,
    values: Vec<f64>,
    absorbed_at: Option<usize>,
}

impl SamplePath {
    /// Dense path; if `absorbing`, the path is frozen at zero after its
    /// first zero (including a zero at index 0).
    pub fn from_values(grid: TimeGrid, values: Vec<f64>, absorbing: bool) -> Result<Self> {
        if values.len() != grid.n_steps + 1 {
            return Err(Error::InvalidPath(format!(
                "expected {} values, got {}",
                grid.n_steps + 1,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "path values must be finite and >= 0, found {bad}"
            )));
        }
        let absorbed_at = if absorbing {
            values.iter().position(|&v| v == 0.0)
        } else {
            None
        };
        if let Some(k) = absorbed_at {
            if values[k..].iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidPath(format!(
                    "absorbing path leaves zero after index {k}"
                )));
            }
            let mut values = values;
            values.truncate(k + 1);
            return Ok(Self {
                grid,
                onset: 0,
                values,
                absorbed_at,
            });
        }
        Ok(Self {
            grid,
            onset: 0,
            values,
            absorbed_at: None,
        })
    }

    /// Dense path that is zero before `onset` without being extinct there,
    /// and absorbing from `onset` on.
    pub fn with_onset(grid: TimeGrid, onset: usize, values: Vec<f64>) -> Result<Self> {
        if onset > grid.n_steps {
            return Err(Error::InvalidPath(format!("onset {onset} beyond the grid")));
        }
        if values.len() == grid.n_steps + 1 && values[..onset].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidPath(
                "path must vanish before its onset".into(),
            ));
        }
        let full = Self::from_values(grid, values, false)?;
        let tail = full.values[onset..].to_vec();
        let absorbed = tail.iter().position(|&v| v == 0.0);
        if let Some(k) = absorbed {
            if tail[k..].iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidPath(format!(
                    "absorbing path leaves zero after index {}",
                    onset + k
                )));
            }
            return Ok(Self {
                grid,
                onset,
                values: tail[..=k].to_vec(),
                absorbed_at: Some(onset + k),
            });
        }
        Ok(Self {
            grid,
            onset,
            values: tail,
            absorbed_at: None,
        })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::from_values(grid, vec![value; grid.n_steps + 1], true)
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self {
            grid,
            onset: 0,
            values: vec![0.0],
            absorbed_at: Some(0),
        }
    }

    /// Used by the simulators: `values` start at `onset` and run until
    /// absorption or the end of the grid.
    pub(crate) fn from_raw(
        grid: TimeGrid,
        onset: usize,
        values: Vec<f64>,
        absorbed_at: Option<usize>,
    ) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        debug_assert!(match absorbed_at {
            Some(k) => onset + values.len() == k + 1 && values[values.len() - 1] == 0.0,
            None => onset + values.len() == grid.n_steps + 1,
        });
        Self {
            grid,
            onset,
            values,
            absorbed_at,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn onset(&self) -> usize {
        self.onset
    }

    pub fn absorbed_at(&self) -> Option<usize> {
        self.absorbed_at
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        if k < self.onset {
            return 0.0;
        }
        self.values.get(k - self.onset).copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.value(self.grid.n_steps)
    }

    /// Index one past the last stored value; every index at or beyond this is zero.
    pub fn support_end(&self) -> usize {
        self.onset + self.values.len()
    }

    /// All `n_steps + 1` values.
    pub fn dense(&self) -> Vec<f64> {
        (0..=self.grid.n_steps).map(|k| self.value(k)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.grid.n_steps).map(move |k| self.value(k))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Add this path into a dense accumulator of length `n_steps + 1`.
    pub fn add_into(&self, acc: &mut [f64]) {
        for (slot, v) in acc[self.onset..].iter_mut().zip(&self.values) {
            *slot += v;
        }
    }
}
