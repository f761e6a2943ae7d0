//! Executes the selected registry tests and writes their reports.

use std::path::PathBuf;

use massfield::verification::{
    expectation_bound_suite, generator_martingale_test, jump_structure, linear_oracle,
    martingale_test_m, phi_bound_check, phi_continuity, reconstruction_ks, reconstruction_trend,
    riemann_convergence, JumpConfig, MartingaleConfig, ReconstructionConfig, RiemannConfig,
    DEFAULT_Z,
};
use massfield::{
    check_identity_48, check_lemma43, check_lemma44, entrance_law_test, uniform_x_grid,
    validate_drift, CheckSetup, DriftKind, DriftSpec, IdentityCheck, NoiseStream, SamplePath,
    StepFunction, TestReport, TimeGrid,
};

use crate::config::{ExperimentConfig, Params};
use crate::output;
use crate::registry;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{test}: {source}")]
    Test {
        test: String,
        source: massfield::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot build thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub test: &'static str,
    pub mandatory: bool,
    pub reports: Vec<TestReport>,
}

impl TestOutcome {
    /// Every decided report passed. Inconclusive reports do not count as
    /// failures; a test with no decided report at all does.
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass != Some(false))
            && self.reports.iter().any(|r| r.pass.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcomes: Vec<TestOutcome>,
}

impl RunOutcome {
    pub fn all_mandatory_passed(&self) -> bool {
        self.outcomes
            .iter()
            .filter(|o| o.mandatory)
            .all(TestOutcome::passed)
    }
}

/// Run inside a dedicated pool when `jobs` is set, else on the global pool.
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, RunError> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(f)),
        None => Ok(f()),
    }
}

/// Run every selected test, writing `<test>.json` after each one and
/// `aggregate.csv` at the end.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| RunError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    with_jobs(cfg.jobs, || {
        let mut outcomes = Vec::new();
        for &test in &cfg.tests {
            let entry = registry::lookup(test).expect("config only selects registry tests");
            let reports = run_test(cfg, test).map_err(|source| RunError::Test {
                test: test.to_string(),
                source,
            })?;
            output::write_reports(&cfg.out_dir, test, &reports)?;
            outcomes.push(TestOutcome {
                test,
                mandatory: entry.mandatory,
                reports,
            });
        }
        output::write_aggregate(&cfg.out_dir.join("aggregate.csv"), &outcomes)?;
        Ok(RunOutcome { outcomes })
    })?
}

const LOGISTIC_11: (DriftKind, &[f64]) = (DriftKind::Logistic, &[1.0, 1.0]);
const CRITICAL: (DriftKind, &[f64]) = (DriftKind::Linear, &[0.0]);
const GIRSANOV_MATRIX: &[(DriftKind, &[f64])] = &[
    LOGISTIC_11,
    (DriftKind::Logistic, &[1.0, 0.5]),
    (DriftKind::Linear, &[1.0]),
];

/// Reports of one registry test. Case `i` of test `name` draws from
/// `NoiseStream::new(seed).fork(name).child(i)`.
pub fn run_test(cfg: &ExperimentConfig, test: &str) -> massfield::Result<Vec<TestReport>> {
    let p = cfg.params(test);
    let base = NoiseStream::new(cfg.seed).fork(test);
    let mut case = 0u64;
    let mut next = || {
        let s = base.child(case);
        case += 1;
        s
    };
    let mut out = Vec::new();
    match test {
        "validate_drift" => {
            for spec in p.drifts(&[LOGISTIC_11, (DriftKind::Logistic, &[1.0, 0.5]), CRITICAL]) {
                out.push(validation_report(
                    &spec,
                    p.real("m", 10.0),
                    p.count("probes", 10_000),
                    next(),
                ));
            }
        }
        "linear_oracle" => {
            let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?;
            for theta in p.reals("thetas", &[0.0, 1.0]) {
                out.extend(linear_oracle(
                    theta,
                    p.real("x", 1.0),
                    grid,
                    p.count("n", 10_000),
                    p.real("level", 0.01),
                    next(),
                )?);
            }
        }
        "entrance_law" => {
            let times = p.reals("times", &[0.5, 1.0]);
            let horizon = times.iter().copied().fold(0.0, f64::max);
            let grid = TimeGrid::with_horizon(p.real("dt", 1e-4), horizon)?;
            for t in times {
                out.push(entrance_law_test(
                    t,
                    p.count("n", 100_000),
                    grid,
                    p.real("level", 0.01),
                    next(),
                )?);
            }
        }
        "identity_48" | "lemma_43" | "lemma_44" => {
            let (grid, z) = environment(&p)?;
            for spec in p.drifts(GIRSANOV_MATRIX) {
                // Both of these weigh whole excursions, which only carry the
                // tilted law when the tilted process dies out.
                let applicable = test == "lemma_44" || reaches_extinction(&spec);
                for y in p.reals("ys", &[0.0, 0.2, 0.5]) {
                    // The increment identity needs a positive increment.
                    if test == "identity_48" && y == 0.0 {
                        continue;
                    }
                    for t in p.reals("times", &[0.5, 1.0]) {
                        let setup = CheckSetup {
                            grid,
                            t,
                            n: p.count("n", 100_000),
                        };
                        let stream = next();
                        if !applicable {
                            let mut r = TestReport::inconclusive(
                                test,
                                "not applicable: drift fails the extinction condition",
                            );
                            r.param("drift", spec.label()).param("y", y).param("t", t);
                            out.push(r.with_seed(stream.seed()));
                            continue;
                        }
                        let check = match test {
                            "identity_48" => check_identity_48(&spec, &z, y, setup, stream)?,
                            "lemma_43" => check_lemma43(&spec, &z, y, setup, stream)?,
                            _ => check_lemma44(&spec, &z, y, setup, stream)?,
                        };
                        out.push(identity_report(test, &spec, &check, y, &setup, &p, stream));
                    }
                }
            }
        }
        "phi_bounds" => {
            let (grid, z) = environment(&p)?;
            let n = p.count("n", 100_000);
            let small_t = p.real("small_t", grid.dt());
            for spec in p.drifts(GIRSANOV_MATRIX) {
                for y in p.reals("ys", &[0.0, 0.2, 0.5]) {
                    for t in p.reals("times", &[0.5, 1.0]) {
                        let setup = CheckSetup { grid, t, n };
                        out.push(phi_bound_check(&spec, &z, y, setup, false, next())?);
                    }
                    let setup = CheckSetup {
                        grid,
                        t: small_t,
                        n,
                    };
                    out.push(phi_bound_check(&spec, &z, y, setup, true, next())?);
                }
            }
        }
        "phi_continuity" => {
            let (grid, z) = environment(&p)?;
            let setup = CheckSetup {
                grid,
                t: p.real("t", 1.0),
                n: p.count("n", 10_000),
            };
            for spec in p.drifts(&[LOGISTIC_11]) {
                out.push(phi_continuity(
                    &spec,
                    &z,
                    p.real("bump", 0.1),
                    p.real("y", 0.2),
                    setup,
                    next(),
                )?);
            }
        }
        "expectation_bound" => {
            let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?;
            for spec in p.drifts(&[LOGISTIC_11, (DriftKind::Linear, &[1.0])]) {
                let suite = expectation_bound_suite(
                    &spec,
                    p.real("x", 1.0),
                    p.real("y", 0.5),
                    grid,
                    p.count("n", 10_000),
                    next(),
                )?;
                out.extend(suite.reports().into_iter().cloned());
            }
        }
        "jump_structure" => {
            let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?;
            let jc = JumpConfig {
                x_max: p.real("x_max", 4.0),
                cells: p.count("cells", 1024),
                grid,
                s: p.real("s", 0.5),
                atol: p.real("atol", 1e-6),
                n: p.count("n", 2000),
            };
            for theta in p.reals("thetas", &[0.0, 1.0]) {
                out.extend(jump_structure(theta, jc, next())?);
            }
        }
        "martingale_m" | "generator_martingale" => {
            let generator = test == "generator_martingale";
            let cells = p.count("cells", if generator { 32 } else { 16 });
            let xs = uniform_x_grid(p.real("x_max", 1.0), cells);
            let a = p.count("a_index", cells / 2);
            let mc = MartingaleConfig {
                grid: TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?,
                n_outer: p.count("n_outer", 2000),
                n_inner: p.count("n_inner", 200),
            };
            for spec in p.drifts(&[LOGISTIC_11, CRITICAL]) {
                let r = if generator {
                    let g = StepFunction::indicator(p.real("g_value", 1.0), mc.grid.horizon())?;
                    let dq = massfield::DeltaQConfig::new(p.real("delta", 0.01))?;
                    generator_martingale_test(&spec, &g, &xs, a, dq, mc, next())?
                } else {
                    martingale_test_m(&spec, &xs, a, mc, next())?
                };
                out.push(r);
            }
        }
        "reconstruction" => {
            let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?;
            for spec in p.drifts(&[CRITICAL]) {
                out.push(reconstruction_ks(
                    &spec,
                    p.real("x", 1.0),
                    p.real("delta", 0.01),
                    grid,
                    p.count("n", 5000),
                    p.real("level", 0.01),
                    next(),
                )?);
            }
        }
        "reconstruction_trend" => {
            let deltas = p.reals("deltas", &[0.04, 0.02, 0.01]);
            let dts = p.reals("dts", &[2e-3, 1e-3, 5e-4]);
            if deltas.len() != dts.len() {
                return Err(massfield::Error::InvalidArgument(
                    "deltas and dts must have the same length".into(),
                ));
            }
            let rc = ReconstructionConfig {
                x: p.real("x", 1.0),
                horizon: p.real("horizon", 1.0),
                levels: deltas.into_iter().zip(dts).collect(),
                n: p.count("n", 5000),
                repetitions: p.count("repetitions", 4),
                level: p.real("level", 0.01),
            };
            for spec in p.drifts(&[LOGISTIC_11]) {
                out.push(reconstruction_trend(&spec, &rc, next())?);
            }
        }
        "riemann" => {
            let rc = RiemannConfig {
                x: p.real("x", 1.0),
                grid: TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0))?,
                levels: p.counts("levels", &[4, 8, 16]),
                reference_cells: p.count("reference_cells", 32),
                n_outer: p.count("n_outer", 100),
                n_inner: p.count("n_inner", 50),
            };
            for spec in p.drifts(&[LOGISTIC_11, CRITICAL]) {
                out.push(riemann_convergence(&spec, &rc, next())?);
            }
        }
        other => unreachable!("`{other}` is not in the registry"),
    }
    for r in &mut out {
        r.params.insert("test".into(), test.into());
    }
    Ok(out)
}

/// Check grid up to the horizon cap, and the constant environment path.
fn environment(p: &Params) -> massfield::Result<(TimeGrid, SamplePath)> {
    let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("cap", 20.0))?;
    let z = SamplePath::constant(grid, p.real("z", 1.0))?;
    Ok((grid, z))
}

fn reaches_extinction(spec: &DriftSpec) -> bool {
    validate_drift(spec, 1.0, 1, NoiseStream::new(0))
        .extinction
        .apparently_divergent
}

fn validation_report(spec: &DriftSpec, m: f64, probes: usize, stream: NoiseStream) -> TestReport {
    let v = validate_drift(spec, m, probes, stream);
    let failed = [
        v.zero_at_origin,
        v.one_sided_growth.passed,
        v.holder.passed,
        v.extinction.apparently_divergent,
    ]
    .iter()
    .filter(|ok| !**ok)
    .count();
    let mut r = TestReport::new("validate_drift", failed as f64, 0.0, Some(v.all_passed()));
    r.param("drift", spec.label())
        .param("m", m)
        .param("probes", probes)
        .diagnostic("zero_at_origin", if v.zero_at_origin { 1.0 } else { 0.0 })
        .diagnostic("one_sided_margin", v.one_sided_growth.margin)
        .diagnostic("holder_margin", v.holder.margin)
        .diagnostic("log_tail_mid", v.extinction.log_tail_mid)
        .diagnostic("log_tail_end", v.extinction.log_tail_end)
        .diagnostic(
            "bounded_by_two_beyond",
            v.bounded_by_two_beyond.unwrap_or(f64::NAN),
        );
    if !v.extinction.apparently_divergent {
        r.note = Some("extinction integral looks convergent (heuristic)".into());
    }
    r.with_seed(stream.seed())
}

fn identity_report(
    test: &str,
    spec: &DriftSpec,
    c: &IdentityCheck,
    y: f64,
    setup: &CheckSetup,
    p: &Params,
    stream: NoiseStream,
) -> TestReport {
    let mut r = TestReport::new(test, c.z_distance, DEFAULT_Z, Some(c.pass));
    r.param("identity", &c.identity)
        .param("drift", spec.label())
        .param("y", y)
        .param("t", setup.t)
        .param("n", setup.n)
        .param("dt", setup.grid.dt())
        .param("cap", setup.grid.horizon())
        .param("z", p.real("z", 1.0))
        .diagnostic("lhs", c.lhs.mean)
        .diagnostic("lhs_se", c.lhs.std_error)
        .diagnostic("rhs", c.rhs.mean)
        .diagnostic("rhs_se", c.rhs.std_error)
        .diagnostic("capped_fraction", c.capped_fraction)
        .diagnostic("negligible_fraction", c.negligible_fraction);
    for (k, v) in &c.params {
        r.param(k, v);
    }
    r.with_seed(stream.seed())
}

/// Raw paths for plotting: one `Z^x` path, `replicates` mass fields on
/// `[0, x_max]` and the excursion atoms of as many reconstructions.
/// Returns the files written.
pub fn emit_paths(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, RunError> {
    let fail = |source| RunError::Test {
        test: "emit".into(),
        source,
    };
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| RunError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let p = cfg.params("emit");
    let spec = p.drifts(&[LOGISTIC_11]).swap_remove(0);
    let grid = TimeGrid::with_horizon(p.real("dt", 1e-3), p.real("horizon", 1.0)).map_err(fail)?;
    let reps = p.count("replicates", 3);
    let every = p.count("every", 1);
    let x_max = p.real("x_max", 1.0);
    let cells = p.count("cells", 16);
    let dq = massfield::DeltaQConfig::new(p.real("delta", 0.01)).map_err(fail)?;
    let base = NoiseStream::new(cfg.seed).fork("emit");
    with_jobs(cfg.jobs, || {
        let z = massfield::simulate_z(p.real("x", 1.0), &spec, grid, base.fork("path"))
            .map_err(fail)?;
        let xs = uniform_x_grid(x_max, cells);
        let fields = (0..reps)
            .map(|r| {
                massfield::simulate_mass_field(&xs, &spec, grid, base.fork("field").child(r as u64))
            })
            .collect::<massfield::Result<Vec<_>>>()
            .map_err(fail)?;
        let atoms = (0..reps)
            .map(|r| {
                massfield::reconstruct_field(
                    &spec,
                    x_max,
                    cells,
                    dq,
                    grid,
                    base.fork("atoms").child(r as u64),
                )
                .map(|rec| rec.atoms)
            })
            .collect::<massfield::Result<Vec<_>>>()
            .map_err(fail)?;
        let files = ["paths.csv", "fields.csv", "atoms.csv"].map(|f| cfg.out_dir.join(f));
        output::write_path(&files[0], &z, every)?;
        output::write_fields(&files[1], &fields, every)?;
        output::write_atoms(&files[2], &atoms, every)?;
        Ok(files.to_vec())
    })?
}
