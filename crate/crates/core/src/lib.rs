//! Monte Carlo simulation of Feller branching diffusions with an interaction
//! drift, `dZ = f(Z) dt + 2 sqrt(Z) dB`, coupled across the initial mass `x`.
//!
//! * [`model`]: drifts, time grids and absorbed paths.
//! * [`kernels`]: Euler and exact samplers.
//! * [`coupling`]: the field `x -> Z^x` and the dominating linear field.
//! * [`girsanov`]: path weights and measure-change checks.
//! * [`excursion`]: entrance law, delta-slice excursion atoms, reconstruction and generator.
//! * [`verification`]: estimators, KS tests and martingale tests.
//!
//! Randomness flows through [`rng::NoiseStream`], a keyed tree of ChaCha
//! streams, so every result is a pure function of its seed.

// `!(x > 0.0)` is deliberate throughout: it rejects NaN with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coupling;
pub mod error;
pub mod excursion;
pub mod girsanov;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod verification;

pub use coupling::{
    check_nesting, count_jumps, domination_violations, dyadic_coupled_field, simulate_coupled_uv,
    simulate_increment_conditional, simulate_linear_field, simulate_mass_field, uniform_x_grid,
    JumpSet, MassField,
};
pub use error::{Error, Result};
pub use excursion::{
    entrance_law_test, generator_applied, reconstruct_field, sample_delta_excursions,
    sample_entrance, DeltaQConfig, ExcursionAtom, Reconstruction, StepFunction,
};
pub use girsanov::{
    check_identity_48, check_lemma43, check_lemma44, compute_weights, estimate_phi, CheckSetup,
    IdentityCheck, PhiEstimate, WeightHorizon, WeightResult,
};
pub use kernels::{
    extinction_time, linear_transition_params, simulate_immigration, simulate_linear_exact,
    simulate_tilted, simulate_z, step_split, step_sqrt, Scheme, ZeroPolicy,
};
pub use model::{
    make_drift, validate_drift, DriftKind, DriftSpec, SamplePath, TimeGrid, ValidationReport,
};
pub use rng::NoiseStream;
pub use verification::{McEstimate, TestReport};
