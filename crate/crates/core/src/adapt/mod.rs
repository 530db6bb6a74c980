//! The AM adaptation recursion, the constrained update `σ_n`, and the chain
//! driver.
//!
//! The adaptation parameter is the pair `s = (s^(m), s^(v))` of running mean
//! and covariance, normed by `|s| = ‖s^(m)‖ ∨ ‖s^(v)‖_F`. One step of the
//! chain draws `X_n ~ P_{θ S_{n-1}^(v)}(X_{n-1}, ·)` and then sets
//! `S_n = σ_n(S_{n-1}, η_n H(S_{n-1}, X_n))`.

mod chain;
mod trace;

pub use chain::{growth_monitor, run_am_chain, AmSampler, GrowthReport, DEFAULT_SNAPSHOT_EVERY};
pub use trace::{read_csv, ChainTrace, TraceColumns, TraceSidecar};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{vector_serde, SpdMatrix, Vector};

/// Running mean and covariance after `n` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState {
    #[serde(with = "vector_serde")]
    pub mean: Vector,
    pub cov: SpdMatrix,
    pub n: u64,
}

impl AdaptationState {
    pub fn new(mean: Vector, cov: SpdMatrix, n: u64) -> Result<Self> {
        check_dim(cov.dim(), mean.len())?;
        Ok(AdaptationState { mean, cov, n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `|s| = ‖s^(m)‖ ∨ ‖s^(v)‖_F`.
    pub fn norm(&self) -> f64 {
        self.mean.norm().max(self.cov.frobenius_norm())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RecursionVariant {
    /// `Σ_n = (1 − η_n) Σ_{n−1} + η_n [(X_n − X̄_{n−1})(X_n − X̄_{n−1})ᵀ + κI]`,
    /// with `η_n = (n+1)^{-γ}`.
    #[default]
    Modified,
    /// The unbiased sample covariance plus `κI`:
    /// `Σ_n = ((n−1)/n) Σ_{n−1} + (1/(n+1)) (X_n − X̄_{n−1})(X_n − X̄_{n−1})ᵀ + (κ/n) I`.
    Original,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmConfig {
    /// Proposal scale `θ`.
    pub theta: f64,
    /// Regularization `κ`.
    pub kappa: f64,
    /// `γ` in `η_n = (n+1)^{-γ}`.
    pub weight_exponent: f64,
    pub recursion_variant: RecursionVariant,
    /// Number of initial steps proposing with the fixed `Σ_0`.
    pub burn_in: u64,
}

pub const DEFAULT_KAPPA: f64 = 0.01;

impl AmConfig {
    /// `θ = 2.38²/d`, `κ = 0.01`, `γ = 1`, modified recursion, no burn-in.
    pub fn for_dim(d: usize) -> Self {
        AmConfig {
            theta: 2.38 * 2.38 / d as f64,
            kappa: DEFAULT_KAPPA,
            weight_exponent: 1.0,
            recursion_variant: RecursionVariant::Modified,
            burn_in: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            errs.push(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            errs.push(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.weight_exponent > 0.0 && self.weight_exponent.is_finite()) {
            errs.push(format!(
                "weight_exponent must be positive, got {}",
                self.weight_exponent
            ));
        }
        if self.recursion_variant == RecursionVariant::Original && self.weight_exponent != 1.0 {
            errs.push("the original recursion uses fixed weights; weight_exponent must be 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(errs.join("; ")))
        }
    }

    /// `η_n = (n+1)^{-γ}`.
    pub fn weight(&self, n: u64) -> f64 {
        if self.weight_exponent == 1.0 {
            1.0 / (n as f64 + 1.0)
        } else {
            (n as f64 + 1.0).powf(-self.weight_exponent)
        }
    }
}

/// The growing constraint sets `K_n = { s : |s| ≤ t n^{ε'} }`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSchedule {
    pub t: f64,
    pub eps_prime: f64,
    pub enabled: bool,
}

impl Default for ConstraintSchedule {
    fn default() -> Self {
        ConstraintSchedule {
            t: 1e6,
            eps_prime: 0.05,
            enabled: false,
        }
    }
}

impl ConstraintSchedule {
    pub fn enabled(t: f64, eps_prime: f64) -> Self {
        ConstraintSchedule {
            t,
            eps_prime,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 1.0 && self.t.is_finite()) {
            return Err(Error::InvalidInput(format!("constraint t must be ≥ 1, got {}", self.t)));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "constraint eps_prime must be positive, got {}",
                self.eps_prime
            )));
        }
        Ok(())
    }

    /// Radius `t n^{ε'}` of `K_n`.
    pub fn bound(&self, n: u64) -> f64 {
        self.t * (n as f64).powf(self.eps_prime)
    }

    /// `ε' = ε/(2d)`, the coupling used when deriving the law of large
    /// numbers for the unconstrained chain.
    pub fn coupled_eps_prime(eps: f64, d: usize) -> f64 {
        eps / (2.0 * d as f64)
    }
}

/// An element of the ambient space `ℝ^d × ℝ^{d×d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationIncrement {
    pub mean_delta: Vector,
    pub cov_delta: DMatrix<f64>,
}

impl AdaptationIncrement {
    pub fn scaled(&self, eta: f64) -> Self {
        AdaptationIncrement {
            mean_delta: &self.mean_delta * eta,
            cov_delta: &self.cov_delta * eta,
        }
    }
}

/// `H(s, x) = (x − s^(m), (x − s^(m))(x − s^(m))ᵀ − s^(v) + κI)`.
pub fn adaptation_h(s: &AdaptationState, x: &Vector, kappa: f64) -> Result<AdaptationIncrement> {
    check_dim(s.dim(), x.len())?;
    let r = x - &s.mean;
    let d = s.dim();
    let cov_delta = &r * r.transpose() - s.cov.matrix() + DMatrix::identity(d, d) * kappa;
    Ok(AdaptationIncrement {
        mean_delta: r,
        cov_delta,
    })
}

/// Absorbs `x_new` as observation number `n = state.n + 1`.
pub fn am_update(state: &AdaptationState, x_new: &Vector, cfg: &AmConfig) -> Result<AdaptationState> {
    check_dim(state.dim(), x_new.len())?;
    let d = state.dim();
    let n = state.n + 1;
    let nf = n as f64;
    let r = x_new - &state.mean;
    let outer = &r * r.transpose();
    let eye = DMatrix::<f64>::identity(d, d);
    let prev = state.cov.matrix();
    let (cov, floor, mean) = match cfg.recursion_variant {
        RecursionVariant::Modified => {
            let eta = cfg.weight(n);
            let cov = prev * (1.0 - eta) + (outer + eye * cfg.kappa) * eta;
            let floor = (1.0 - eta) * state.cov.certified_floor() + eta * cfg.kappa;
            (cov, floor, &state.mean + &r * eta)
        }
        RecursionVariant::Original => {
            let keep = (nf - 1.0) / nf;
            let cov = prev * keep + outer / (nf + 1.0) + eye * (cfg.kappa / nf);
            let floor = keep * state.cov.certified_floor() + cfg.kappa / nf;
            (cov, floor, &state.mean + &r / (nf + 1.0))
        }
    };
    Ok(AdaptationState {
        mean,
        cov: SpdMatrix::with_structural_floor(cov, floor)?,
        n,
    })
}

/// `σ_n(s, Δ)`: returns `(s + Δ, true)` when `s + Δ ∈ K_n`, otherwise
/// `(s, false)`. A candidate whose covariance is not positive definite lies
/// outside the parameter space and is rejected as well. The returned state
/// carries time index `n` in both cases.
pub fn constrain_step(
    s: &AdaptationState,
    increment: &AdaptationIncrement,
    n: u64,
    sched: &ConstraintSchedule,
) -> Result<(AdaptationState, bool)> {
    check_dim(s.dim(), increment.mean_delta.len())?;
    let cov = s.cov.matrix() + &increment.cov_delta;
    let Ok(cov) = SpdMatrix::new(cov) else {
        return Ok((AdaptationState { n, ..s.clone() }, false));
    };
    let candidate = AdaptationState {
        mean: &s.mean + &increment.mean_delta,
        cov,
        n,
    };
    Ok(constrain_candidate(s, candidate, sched))
}

/// The projection applied to an already-formed candidate `s + Δ`.
pub(crate) fn constrain_candidate(
    s: &AdaptationState,
    candidate: AdaptationState,
    sched: &ConstraintSchedule,
) -> (AdaptationState, bool) {
    if !sched.enabled || candidate.norm() <= sched.bound(candidate.n) {
        (candidate, true)
    } else {
        let n = candidate.n;
        (AdaptationState { n, ..s.clone() }, false)
    }
}
