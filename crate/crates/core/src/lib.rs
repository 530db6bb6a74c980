//! Adaptive Metropolis (AM) sampling with sequentially constrained
//! adaptation, together with the numerical machinery needed to check when
//! such a chain is well behaved:
//!
//! * [`linalg`]: dense SPD matrices, Cholesky factors and Gaussian draws.
//! * [`targets`]: the target-density interface, built-in densities, the
//!   drift function `V = c_V π^{-1/2}` and verifiers for the tail and
//!   contour conditions.
//! * [`kernel`]: the random-walk Metropolis transition and its exact
//!   discretization on a 1-d grid.
//! * [`adapt`]: the AM mean/covariance recursion, the projection onto the
//!   growing sets `K_n`, the chain driver and growth monitoring.
//! * [`certify`]: drift/minorization certificates, the computable
//!   Meyn–Tweedie bound and its polynomial constant chain.
//! * [`diagnostics`]: ergodic averages, batch means and adaptation-limit
//!   tracking.

pub mod adapt;
pub mod certify;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod targets;

pub use adapt::{
    adaptation_h, am_update, constrain_step, growth_monitor, run_am_chain, AdaptationIncrement, AdaptationState,
    AmConfig, AmSampler, ChainTrace, ConstraintSchedule, GrowthReport, RecursionVariant,
};
pub use certify::{
    det_scaling_audit, drift_ratio_tau, estimate_minorization, fit_drift_certificate, lemma57_checks, mt_bound,
    polynomial_rate_chain, vnorm_distance_discretized, CertificateSearch, ConvergenceBound, DriftCertificate,
    TauMethod,
};
pub use error::{Error, Result};
pub use kernel::{acceptance_probability, rwm_step, DiscretizedChain, Grid, KernelStep};
pub use linalg::{cholesky, log_gaussian_density, sample_gaussian, SpdMatrix, Vector};
pub use rng::{derive_seed, stream, RngStream};
pub use targets::{DriftFunction, Target, TargetDensity, TargetSpec, Verdict};
