use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the computable bound
/// `‖P^k(x, ·) − π‖_V ≤ V(x) L ρ^k` under a drift/minorization pair
/// `(λ, b, δ)`.
///
/// `M̃` can be astronomically large for small `δ`, so the quantities that
/// would round to `1` or overflow are also stored in log or complement
/// form; `one_minus_vartheta`, `one_minus_rho`, `log_m_tilde` and `log_l`
/// are the authoritative values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBound {
    pub lambda: f64,
    pub b: f64,
    pub delta: f64,
    pub gamma: f64,
    pub lambda_check: f64,
    pub b_check: f64,
    pub zeta_bar: f64,
    #[serde(rename = "M_tilde")]
    pub m_tilde: f64,
    pub vartheta: f64,
    pub rho: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub log_m_tilde: f64,
    pub one_minus_vartheta: f64,
    pub one_minus_rho: f64,
    pub log_l: f64,
}

impl ConvergenceBound {
    /// `log(L ρ^k V(x))` given `log V(x)`.
    pub fn log_bound(&self, k: u64, log_v: f64) -> f64 {
        self.log_l + k as f64 * (-self.one_minus_rho).ln_1p() + log_v
    }

    /// `L ρ^k V(x)`, possibly `+∞`.
    pub fn bound(&self, k: u64, v: f64) -> f64 {
        self.log_bound(k, v.ln()).exp()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// The bound with `ρ = (1 + ϑ)/2`.
///
/// `M̃` uses `ζ̄ (b̌(1 − λ̌) + b̌²)` in the bracket and sets `ζ̄` to its
/// upper bound `((4 − δ²)/δ⁵)(b/(1 − λ))²`.
pub fn mt_bound(lambda: f64, b: f64, delta: f64) -> Result<ConvergenceBound> {
    mt_bound_with_rho(lambda, b, delta, None)
}

/// As [`mt_bound`], with an optional `ρ ∈ (ϑ, 1)`.
pub fn mt_bound_with_rho(lambda: f64, b: f64, delta: f64, rho: Option<f64>) -> Result<ConvergenceBound> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidInput(format!("b must be positive and finite, got {b}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1], got {delta}")));
    }
    let gamma = (4.0 * b + 2.0 * delta * lambda * b) / (delta * delta);
    let lambda_check = (lambda + gamma) / (1.0 + gamma);
    let b_check = b + gamma;
    let zeta_bar = (4.0 - delta * delta) / delta.powi(5) * (b / (1.0 - lambda)).powi(2);

    let ln_zeta = (4.0 - delta * delta).ln() - 5.0 * delta.ln() + 2.0 * (b.ln() - (1.0 - lambda).ln());
    let ln_bc = b_check.ln();
    let ln_olc = (1.0 - lambda).ln() - gamma.ln_1p();
    let bracket = log_sum_exp(&[
        ln_olc,
        ln_bc,
        2.0 * ln_bc,
        ln_zeta + ln_bc + ln_olc,
        ln_zeta + 2.0 * ln_bc,
    ]);
    let log_m_tilde = bracket - 2.0 * ln_olc;
    let one_minus_vartheta = (-log_m_tilde).exp();
    let vartheta = -(-log_m_tilde).exp_m1();

    let (rho, one_minus_rho) = match rho {
        None => (1.0 - 0.5 * one_minus_vartheta, 0.5 * one_minus_vartheta),
        Some(r) => {
            if !(r > vartheta && r < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "rho must lie in (ϑ, 1) = ({vartheta}, 1), got {r}"
                )));
            }
            (r, 1.0 - r)
        }
    };
    let gap = one_minus_vartheta - one_minus_rho;
    if !(gap > 0.0) {
        return Err(Error::InvalidInput(
            "rho is numerically indistinguishable from ϑ".into(),
        ));
    }
    let log_l = gamma.ln_1p() + rho.ln() - gap.ln();
    Ok(ConvergenceBound {
        lambda,
        b,
        delta,
        gamma,
        lambda_check,
        b_check,
        zeta_bar,
        m_tilde: log_m_tilde.exp(),
        vartheta,
        rho,
        l: log_l.exp(),
        log_m_tilde,
        one_minus_vartheta,
        one_minus_rho,
        log_l,
    })
}

/// Constants of the adaptive-kernel chain at time `n`, together with the
/// polynomial envelopes `a₁ … a₇` and their audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialRate {
    pub c: f64,
    pub eps: f64,
    pub r: f64,
    pub n: u64,
    /// `λ̃_n = 1 − r c⁻¹ n^{-ε}`.
    pub lambda_tilde: f64,
    /// `b̃_n = (2 c n^ε)^r`.
    pub b_tilde: f64,
    /// `δ_n = c⁻¹ n^{-ε}`.
    pub delta_n: f64,
    /// Smallest `c̃ ≥ 1` with `(1 − λ̃_n)⁻¹ ∨ b̃_n ≤ c̃ n^ε` for all `n ≥ 1`.
    pub c_tilde: f64,
    /// `a₁ … a₇`.
    pub a: [f64; 7],
    pub bound: ConvergenceBound,
    pub l_n: f64,
    pub rho_n: f64,
    /// `log (1 − ρ_n)⁻¹`.
    pub log_inv_one_minus_rho: f64,
    /// `(1 − ρ_n)⁻¹ ≤ a₆ n^{23ε}`.
    pub rho_audit: bool,
    /// `L_n ≤ a₇ n^{26ε}`.
    pub l_audit: bool,
}

impl PolynomialRate {
    pub fn audit_holds(&self) -> bool {
        self.rho_audit && self.l_audit
    }
}

/// Evaluates the constant chain `(λ̃_n, b̃_n, δ_n) ↦ (L_n, ρ_n)` and checks it
/// against the envelopes
///
/// ```text
/// a₁ = 6 c² c̃          a₂ = c̃ + a₁           a₃ = c̃ (1 + a₁)
/// a₄ = 4 c⁵ c̃⁴         a₅ = 5 a₃² a₄ a₂²     a₆ = 2 a₅      a₇ = (1 + a₁) a₆
/// ```
pub fn polynomial_rate_chain(c: f64, eps: f64, r: f64, n: u64) -> Result<PolynomialRate> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("c must be ≥ 1, got {c}")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be ≥ 0, got {eps}")));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidInput(format!("r must lie in (0, 1], got {r}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be ≥ 1".into()));
    }
    let nf = n as f64;
    let ne = nf.powf(eps);
    let lambda_tilde = 1.0 - r / (c * ne);
    let b_tilde = (2.0 * c * ne).powf(r);
    let delta_n = 1.0 / (c * ne);
    let c_tilde = (c / r).max((2.0 * c).powf(r)).max(1.0);

    let a1 = 6.0 * c * c * c_tilde;
    let a2 = c_tilde + a1;
    let a3 = c_tilde * (1.0 + a1);
    let a4 = 4.0 * c.powi(5) * c_tilde.powi(4);
    let a5 = 5.0 * a3 * a3 * a4 * a2 * a2;
    let a6 = 2.0 * a5;
    let a7 = (1.0 + a1) * a6;

    let bound = mt_bound(lambda_tilde, b_tilde, delta_n)?;
    let log_inv_one_minus_rho = -bound.one_minus_rho.ln();
    let ln_n = nf.ln();
    let rho_audit = log_inv_one_minus_rho <= a6.ln() + 23.0 * eps * ln_n;
    let l_audit = bound.log_l <= a7.ln() + 26.0 * eps * ln_n;
    Ok(PolynomialRate {
        c,
        eps,
        r,
        n,
        lambda_tilde,
        b_tilde,
        delta_n,
        c_tilde,
        a: [a1, a2, a3, a4, a5, a6, a7],
        l_n: bound.l,
        rho_n: bound.rho,
        bound,
        log_inv_one_minus_rho,
        rho_audit,
        l_audit,
    })
}
