//! Couplings across ancestral mass.
//!
//! A [`MassField`] holds `x -> Z^x` on a finite x-grid as nonnegative
//! increments `Z^{x_k} - Z^{x_{k-1}}`. Each increment is driven by its own
//! noise strip, conditionally on the cumulative path below it, which is the
//! discrete form of the white-noise coupling and makes `x -> Z^x` Markov.

use crate::error::{Error, Result};
use crate::kernels::{
    check_compatible, integrate, sample_linear_exact, step_split, Scheme, ZeroPolicy,
};
use crate::model::{DriftSpec, SamplePath, TimeGrid};
use crate::rng::{NoiseStream, Sampler};

/// `x -> Z^x` on a finite grid, stored as nonnegative increments.
#[derive(Debug, Clone, PartialEq)]
pub struct MassField {
    x_grid: Vec<f64>,
    grid: TimeGrid,
    /// `increments[k - 1]` is `Z^{x_k} - Z^{x_{k-1}}`.
    increments: Vec<SamplePath>,
}

pub(crate) fn check_x_grid(x_grid: &[f64]) -> Result<()> {
    if x_grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("x-grid must start at 0".into()));
    }
    if x_grid
        .windows(2)
        .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return Err(Error::InvalidArgument(
            "x-grid must be strictly increasing and finite".into(),
        ));
    }
    Ok(())
}

/// `0, step, 2 step, ..., n step`.
pub fn uniform_x_grid(x_max: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|k| x_max * k as f64 / cells as f64)
        .collect()
}

impl MassField {
    pub fn from_increments(
        x_grid: Vec<f64>,
        grid: TimeGrid,
        increments: Vec<SamplePath>,
    ) -> Result<Self> {
        check_x_grid(&x_grid)?;
        if increments.len() + 1 != x_grid.len() {
            return Err(Error::InvalidArgument(
                "need one increment per x-grid cell".into(),
            ));
        }
        Ok(Self {
            x_grid,
            grid,
            increments,
        })
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn increments(&self) -> &[SamplePath] {
        &self.increments
    }

    /// `Z^{x_k}` at time index `i`.
    pub fn cumulative(&self, k: usize, i: usize) -> f64 {
        self.increments[..k].iter().map(|p| p.value(i)).sum()
    }

    /// Dense path of `Z^{x_k}`.
    pub fn cumulative_path(&self, k: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.n_steps() + 1];
        for p in &self.increments[..k] {
            p.add_into(&mut acc);
        }
        acc
    }

    /// Dense paths of `Z^{x_0}, ..., Z^{x_last}`.
    pub fn cumulative_paths(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.grid.n_steps() + 1];
        let mut out = Vec::with_capacity(self.x_grid.len());
        out.push(acc.clone());
        for p in &self.increments {
            p.add_into(&mut acc);
            out.push(acc.clone());
        }
        out
    }

    /// `Z^{x_k}` as a [`SamplePath`].
    pub fn cumulative_sample_path(&self, k: usize) -> SamplePath {
        let onset = self.increments[..k]
            .iter()
            .map(SamplePath::onset)
            .min()
            .unwrap_or(0);
        SamplePath::with_onset(self.grid, onset, self.cumulative_path(k))
            .expect("sums of absorbing nonnegative paths are absorbing and nonnegative")
    }
}

fn increment_on(
    spec: &DriftSpec,
    z: &[f64],
    y: f64,
    grid: TimeGrid,
    rng: &mut Sampler,
) -> SamplePath {
    integrate(
        grid,
        0,
        y,
        rng,
        Scheme::Split,
        |k, v| spec.increment(z[k], v),
        |_| ZeroPolicy::Absorb,
    )
}

/// `V = Z^{x+y} - Z^x` given the path `z = Z^x`:
/// `dV = F(z_s, V) ds + 2 sqrt(V) dB` with a fresh noise strip.
pub fn simulate_increment_conditional(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<SamplePath> {
    spec.check_simulable()?;
    check_compatible(z, grid)?;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")));
    }
    let dense = z.dense();
    Ok(increment_on(spec, &dense, y, grid, &mut stream.rng()))
}

/// The pair `(V, U)` driven by a shared lower noise strip: with
/// `m = min(V, U)` both see `sqrt(m) N1`, and each sees its own excess
/// strip. `U` has no drift; `V` has drift `F(z_s, V)`.
pub fn simulate_coupled_uv(
    spec: &DriftSpec,
    z: &SamplePath,
    y: f64,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<(SamplePath, SamplePath)> {
    spec.check_simulable()?;
    check_compatible(z, grid)?;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidArgument(format!("y must be >= 0, got {y}")));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let mut rng = stream.rng();
    let (mut v, mut u) = (y, y);
    let mut vs = vec![v];
    let mut us = vec![u];
    let (mut v_abs, mut u_abs) = ((v == 0.0).then_some(0), (u == 0.0).then_some(0));
    for k in 0..n {
        if v_abs.is_some() && u_abs.is_some() {
            break;
        }
        let (n1, n2, n3) = (rng.gaussian(), rng.gaussian(), rng.gaussian());
        let m = v.min(u);
        if v_abs.is_none() {
            let noise = 2.0 * sdt * (m.sqrt() * n1 + (v - m).sqrt() * n2);
            v = (v + spec.increment(z.value(k), v) * dt + noise).max(0.0);
            vs.push(v);
            if v == 0.0 {
                v_abs = Some(k + 1);
            }
        }
        if u_abs.is_none() {
            let noise = 2.0 * sdt * (m.sqrt() * n1 + (u - m).sqrt() * n3);
            u = (u + noise).max(0.0);
            us.push(u);
            if u == 0.0 {
                u_abs = Some(k + 1);
            }
        }
    }
    Ok((
        SamplePath::from_raw(grid, 0, vs, v_abs),
        SamplePath::from_raw(grid, 0, us, u_abs),
    ))
}

/// Field `x -> Z^x` built increment by increment, each conditioned on the
/// running cumulative path and driven by sub-stream `k` of `stream`.
pub fn simulate_mass_field(
    x_grid: &[f64],
    spec: &DriftSpec,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<MassField> {
    spec.check_simulable()?;
    check_x_grid(x_grid)?;
    let mut running = vec![0.0; grid.n_steps() + 1];
    let mut increments = Vec::with_capacity(x_grid.len().saturating_sub(1));
    for (k, w) in x_grid.windows(2).enumerate() {
        let mut rng = stream.child(k as u64 + 1).rng();
        let inc = increment_on(spec, &running, w[1] - w[0], grid, &mut rng);
        inc.add_into(&mut running);
        increments.push(inc);
    }
    Ok(MassField {
        x_grid: x_grid.to_vec(),
        grid,
        increments,
    })
}

/// Field of the linear drift `theta z`, whose increments are independent;
/// each is stepped with the exact transition of the linear branching
/// diffusion, so the field has no time-discretization error at grid points.
pub fn simulate_linear_field(
    x_grid: &[f64],
    theta: f64,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<MassField> {
    check_x_grid(x_grid)?;
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "theta must be finite, got {theta}"
        )));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let increments = x_grid
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mut rng = stream.child(k as u64 + 1).rng();
            let mut v = w[1] - w[0];
            let mut vs = vec![v];
            let mut absorbed = (v == 0.0).then_some(0);
            for i in 0..n {
                if v == 0.0 {
                    break;
                }
                v = sample_linear_exact(v, theta, dt, &mut rng)?;
                vs.push(v);
                if v == 0.0 {
                    absorbed = Some(i + 1);
                }
            }
            Ok(SamplePath::from_raw(grid, 0, vs, absorbed))
        })
        .collect::<Result<_>>()?;
    Ok(MassField {
        x_grid: x_grid.to_vec(),
        grid,
        increments,
    })
}

/// Joint field `(Y, Z~)` where `Y` is the linear field with rate `theta` and
/// `Z~` has the law of the interacting field, coupled so that every
/// increment of `Z~` is dominated by the matching increment of `Y`.
///
/// Per cell the pair `(dZ, D)` is stepped independently with the split
/// scheme (exact critical step, then drift), where
/// `D = dY - dZ` has drift `theta dY - F(a, dZ) >= theta D` and is truncated
/// at 0; `dY` is reconstituted as `dZ + D`, so `dZ <= dY` holds exactly.
pub fn dyadic_coupled_field(
    x_grid: &[f64],
    spec: &DriftSpec,
    grid: TimeGrid,
    stream: NoiseStream,
) -> Result<(MassField, MassField)> {
    spec.check_simulable()?;
    check_x_grid(x_grid)?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let theta = spec.theta();
    let mut running = vec![0.0; n + 1];
    let mut z_incs = Vec::with_capacity(x_grid.len().saturating_sub(1));
    let mut y_incs = Vec::with_capacity(x_grid.len().saturating_sub(1));
    for (k, w) in x_grid.windows(2).enumerate() {
        let mut rng = stream.child(k as u64 + 1).rng();
        let (mut dz, mut d) = (w[1] - w[0], 0.0f64);
        let mut zs = vec![dz];
        let mut ys = vec![dz];
        let mut z_abs = (dz == 0.0).then_some(0);
        let mut y_abs = None;
        for i in 0..n {
            if dz == 0.0 && d == 0.0 {
                y_abs = Some(i);
                break;
            }
            let fz = spec.increment(running[i], dz);
            let d_drift = theta * (dz + d) - fz;
            debug_assert!(d_drift >= theta * d - 1e-9 * (1.0 + d_drift.abs()));
            dz = step_split(dz, fz, dt, &mut rng, ZeroPolicy::Absorb);
            d = step_split(d, d_drift, dt, &mut rng, ZeroPolicy::ReflectFree);
            if z_abs.is_none() {
                zs.push(dz);
                if dz == 0.0 {
                    z_abs = Some(i + 1);
                }
            }
            ys.push(dz + d);
        }
        if y_abs.is_none() && dz == 0.0 && d == 0.0 {
            y_abs = Some(n);
        }
        let z_inc = SamplePath::from_raw(grid, 0, zs, z_abs);
        z_inc.add_into(&mut running);
        z_incs.push(z_inc);
        y_incs.push(SamplePath::from_raw(grid, 0, ys, y_abs));
    }
    Ok((
        MassField {
            x_grid: x_grid.to_vec(),
            grid,
            increments: y_incs,
        },
        MassField {
            x_grid: x_grid.to_vec(),
            grid,
            increments: z_incs,
        },
    ))
}

/// Counts of `dZ~ > dY` per grid point, and of `Z~ > Y` per cumulative point.
pub fn domination_violations(y: &MassField, z: &MassField) -> (usize, usize) {
    let n = y.grid().n_steps();
    let mut inc_viol = 0;
    let mut cum_viol = 0;
    let mut ycum = vec![0.0; n + 1];
    let mut zcum = vec![0.0; n + 1];
    for (py, pz) in y.increments().iter().zip(z.increments()) {
        py.add_into(&mut ycum);
        pz.add_into(&mut zcum);
        for i in 0..=n {
            if pz.value(i) > py.value(i) {
                inc_viol += 1;
            }
            if zcum[i] > ycum[i] {
                cum_viol += 1;
            }
        }
    }
    (inc_viol, cum_viol)
}

/// Jumps of `x -> Z_t^x` at a fixed time: cells whose increment exceeds `atol`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSet {
    pub t: f64,
    /// `(x-grid index of the cell's right end, jump size)`, increasing in index.
    pub jumps: Vec<(usize, f64)>,
}

impl JumpSet {
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.jumps.iter().map(|(k, _)| *k)
    }
}

pub fn count_jumps(field: &MassField, t: f64, atol: f64) -> Result<JumpSet> {
    if !(atol > 0.0) {
        return Err(Error::InvalidArgument("atol must be positive".into()));
    }
    let i = field.grid.index_of(t)?;
    let jumps = field
        .increments
        .iter()
        .enumerate()
        .filter_map(|(k, p)| {
            let v = p.value(i);
            (v > atol).then_some((k + 1, v))
        })
        .collect();
    Ok(JumpSet { t, jumps })
}

/// Every jump location at `t` is a jump location at `s < t`.
pub fn check_nesting(field: &MassField, s: f64, t: f64, atol: f64) -> Result<bool> {
    if !(0.0 < s && s < t) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < s < t, got s={s}, t={t}"
        )));
    }
    let early = count_jumps(field, s, atol)?;
    let late = count_jumps(field, t, atol)?;
    let early: std::collections::BTreeSet<usize> = early.indices().collect();
    let nested = late.indices().all(|k| early.contains(&k));
    Ok(nested)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_drift, DriftKind};

    fn grid() -> TimeGrid {
        TimeGrid::new(1e-2, 100).unwrap()
    }

    fn logistic() -> DriftSpec {
        make_drift(DriftKind::Logistic, &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_increment_is_zero() {
        let z = SamplePath::constant(grid(), 1.0).unwrap();
        let v = simulate_increment_conditional(&logistic(), &z, 0.0, grid(), NoiseStream::new(1))
            .unwrap();
        assert!(v.iter().all(|x| x == 0.0));
        let (v, u) =
            simulate_coupled_uv(&logistic(), &z, 0.0, grid(), NoiseStream::new(1)).unwrap();
        assert!(v.iter().chain(u.iter()).all(|x| x == 0.0));
    }

    #[test]
    fn coupled_pair_coincides_without_drift() {
        let z = SamplePath::constant(grid(), 1.0).unwrap();
        for r in 0..20 {
            let (v, u) = simulate_coupled_uv(
                &DriftSpec::zero(),
                &z,
                0.4,
                grid(),
                NoiseStream::new(2).child(r),
            )
            .unwrap();
            assert_eq!(v, u);
        }
    }

    #[test]
    fn trivial_field() {
        let f = simulate_mass_field(&[0.0], &logistic(), grid(), NoiseStream::new(1)).unwrap();
        assert!(f.increments().is_empty());
        assert!(f.cumulative_path(0).iter().all(|v| *v == 0.0));
        assert!(
            simulate_mass_field(&[0.1, 0.2], &logistic(), grid(), NoiseStream::new(1)).is_err()
        );
        assert!(
            simulate_mass_field(&[0.0, 0.2, 0.2], &logistic(), grid(), NoiseStream::new(1))
                .is_err()
        );
    }

    #[test]
    fn field_is_monotone_in_mass() {
        let xs = uniform_x_grid(2.0, 16);
        for r in 0..10 {
            let f = simulate_mass_field(&xs, &logistic(), grid(), NoiseStream::new(3).child(r))
                .unwrap();
            let paths = f.cumulative_paths();
            for w in paths.windows(2) {
                assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
            }
        }
    }

    #[test]
    fn linear_drift_makes_coupled_fields_equal() {
        let spec = make_drift(DriftKind::Linear, &[1.0]).unwrap();
        let xs = uniform_x_grid(1.0, 8);
        let (y, z) = dyadic_coupled_field(&xs, &spec, grid(), NoiseStream::new(4)).unwrap();
        for (a, b) in y.increments().iter().zip(z.increments()) {
            assert_eq!(a.dense(), b.dense());
        }
    }

    #[test]
    fn dyadic_domination_holds_exactly() {
        let xs = uniform_x_grid(2.0, 16);
        for spec in [
            logistic(),
            make_drift(DriftKind::Allee, &[1.0, 0.5, 3.0]).unwrap(),
        ] {
            for r in 0..10 {
                let (y, z) =
                    dyadic_coupled_field(&xs, &spec, grid(), NoiseStream::new(5).child(r)).unwrap();
                assert_eq!(domination_violations(&y, &z), (0, 0));
            }
        }
    }

    #[test]
    fn jumps_and_nesting() {
        let g = grid();
        let zero =
            MassField::from_increments(vec![0.0, 1.0], g, vec![SamplePath::zero(g)]).unwrap();
        assert!(count_jumps(&zero, 0.5, 1e-9).unwrap().is_empty());
        assert!(check_nesting(&zero, 0.5, 1.0, 1e-9).unwrap());
        assert!(check_nesting(&zero, 1.0, 0.5, 1e-9).is_err());

        let p1 = SamplePath::from_values(TimeGrid::new(0.5, 2).unwrap(), vec![1.0, 0.5, 0.0], true)
            .unwrap();
        let p2 = SamplePath::from_values(TimeGrid::new(0.5, 2).unwrap(), vec![1.0, 0.0, 0.0], true)
            .unwrap();
        let p3 = SamplePath::from_values(TimeGrid::new(0.5, 2).unwrap(), vec![1.0, 2.0, 3.0], true)
            .unwrap();
        let f = MassField::from_increments(vec![0.0, 1.0, 2.0, 3.0], p1.grid(), vec![p1, p2, p3])
            .unwrap();
        let js = count_jumps(&f, 0.5, 1e-9).unwrap();
        assert_eq!(js.jumps, vec![(1, 0.5), (3, 2.0)]);
        assert_eq!(count_jumps(&f, 1.0, 1e-9).unwrap().jumps, vec![(3, 3.0)]);
        assert!(check_nesting(&f, 0.5, 1.0, 1e-9).unwrap());
    }
}
