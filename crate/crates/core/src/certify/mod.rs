//! Drift and minorization certificates for the RWM kernel with drift
//! function `V = c_V π^{-1/2}`, the computable Meyn–Tweedie bound, the
//! polynomial constant chain used for adaptive kernels and a numeric check
//! of the auxiliary inequality for `f(x) = x e^{-x²/2}`.

mod bound;
mod discrete;
mod drift;
mod lemma;

pub use bound::{mt_bound, mt_bound_with_rho, polynomial_rate_chain, ConvergenceBound, PolynomialRate};
pub use discrete::{
    fit_discretized_certificate, vnorm_distance_discretized, vnorm_distance_sweep, DiscreteCertificate,
};
pub use drift::{
    det_scaling_audit, drift_ratio_tau, estimate_minorization, fit_drift_certificate, CertificateSearch,
    DriftCertificate, HoldoutReport, QuadratureBudget, ScalingAudit, ScalingRow, TauEstimate, TauMethod,
};
pub use lemma::{lemma57_checks, Lemma57Report};

/// Default slack `1 − λ` required of a drift certificate.
pub const DEFAULT_MARGIN: f64 = 0.05;
