use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid step for the pointwise check on `(0, 1/2]`.
const GRID_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma57Report {
    pub eps: f64,
    pub c: f64,
    /// `min_x [2f(x + ε) − f(x) − x/8]` over the grid.
    pub pointwise_min_slack: f64,
    pub pointwise_holds: bool,
    /// Start of the region where `2f(x + ε) − f(x) < 0`.
    pub sign_change: f64,
    /// `log |∫ (2f(x + ε) − f(x))⁻ dx|`.
    pub log_negative_mass: f64,
    /// `∫_0^∞ min(0, 2f(x + ε) − f(x)) dx`; may underflow to `-0.0`, in
    /// which case `log_negative_mass` carries the value.
    pub negative_integral: f64,
    /// `−exp(−c/ε²)`.
    pub integral_bound: f64,
    pub integral_holds: bool,
}

impl Lemma57Report {
    pub fn holds(&self) -> bool {
        self.pointwise_holds && self.integral_holds
    }
}

fn f(x: f64) -> f64 {
    x * (-0.5 * x * x).exp()
}

/// `(2f(x + ε) − f(x)) e^{x²/2}`, which has the sign of the difference and
/// stays representable far into the tail.
fn scaled_gap(x: f64, eps: f64) -> f64 {
    2.0 * (x + eps) * (-x * eps - 0.5 * eps * eps).exp() - x
}

/// Checks, for `f(x) = x e^{-x²/2}` and `c = 1/32`:
///
/// * `2f(x + ε) − f(x) ≥ x/8` on a `10⁻⁴` grid of `(0, 1/2]`;
/// * `∫_0^∞ min(0, 2f(x + ε) − f(x)) dx ≥ −exp(−c/ε²)`.
///
/// The integral is computed by composite Simpson quadrature in the shifted
/// variable `u = x − x₀`, with `x₀` the sign change, and compared in log
/// space.
pub fn lemma57_checks(eps: f64) -> Result<Lemma57Report> {
    if !(eps > 0.0 && eps < 0.125) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1/8), got {eps}")));
    }
    let c = 1.0 / 32.0;
    let steps = (0.5 / GRID_STEP).round() as usize;
    let pointwise_min_slack = (1..=steps)
        .map(|k| {
            let x = k as f64 * GRID_STEP;
            2.0 * f(x + eps) - f(x) - x / 8.0
        })
        .fold(f64::INFINITY, f64::min);

    // scaled_gap is positive at 0 and eventually negative; bracket and bisect.
    let mut hi = 1.0;
    while scaled_gap(hi, eps) >= 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    if scaled_gap(lo, eps) < 0.0 {
        lo = 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if scaled_gap(mid, eps) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x0 = hi;

    // ∫_{x0}^∞ e^{-x²/2} g(x) dx = e^{-x0²/2} ∫_0^∞ e^{-u x0 - u²/2} g(x0 + u) du.
    let upper = 40.0_f64.min(60.0 / x0.max(1e-3)).max(10.0 / x0.max(1.0));
    let n = 20_000;
    let h = upper / n as f64;
    let integrand = |u: f64| (-u * x0 - 0.5 * u * u).exp() * scaled_gap(x0 + u, eps);
    let mut s = integrand(0.0) + integrand(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(i as f64 * h);
    }
    let inner = s * h / 3.0;
    let log_negative_mass = -0.5 * x0 * x0 + (-inner).ln();
    let log_bound = -c / (eps * eps);
    Ok(Lemma57Report {
        eps,
        c,
        pointwise_min_slack,
        pointwise_holds: pointwise_min_slack >= 0.0,
        sign_change: x0,
        log_negative_mass,
        negative_integral: -log_negative_mass.exp(),
        integral_bound: -log_bound.exp(),
        integral_holds: log_negative_mass <= log_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form: `∫_{x0}^∞ (2f(x + ε) − f(x)) dx = 2e^{−(x0+ε)²/2} − e^{−x0²/2}`,
    /// in log form `−x0²/2 + ln(1 − 2e^{−x0 ε − ε²/2})` for its magnitude.
    fn oracle_log_mass(eps: f64) -> f64 {
        // Sign of 2f(x + ε) − f(x) after dividing by x e^{−x²/2}.
        let s = |x: f64| 2.0 * (1.0 + eps / x) * (-x * eps - 0.5 * eps * eps).exp() - 1.0;
        let mut a = 0.01;
        while s(a) >= 0.0 {
            a += 0.01;
        }
        let (mut lo, mut hi) = (a - 0.01, a);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if s(m) >= 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let x0 = 0.5 * (lo + hi);
        -0.5 * x0 * x0 + (1.0 - 2.0 * (-x0 * eps - 0.5 * eps * eps).exp()).ln()
    }

    #[test]
    fn holds_for_listed_eps() {
        for eps in [0.01, 0.05, 0.1] {
            let r = lemma57_checks(eps).unwrap();
            assert!(r.holds(), "{r:?}");
            assert_eq!(r.c, 1.0 / 32.0);
            let oracle = oracle_log_mass(eps);
            assert!(
                (r.log_negative_mass - oracle).abs() < 1e-6 * oracle.abs().max(1.0),
                "{eps}: {} vs {oracle}",
                r.log_negative_mass
            );
        }
    }

    #[test]
    fn eps_point_one_strictly_above_bound() {
        let r = lemma57_checks(0.1).unwrap();
        assert!((r.integral_bound + (-100.0_f64 / 32.0).exp()).abs() < 1e-15);
        assert!(r.negative_integral > r.integral_bound);
        assert!(r.negative_integral < 0.0);
    }

    #[test]
    fn boundary_at_zero() {
        // Both sides vanish as x → 0⁺ apart from the 2f(ε) term.
        let eps = 0.05;
        let x = 1e-12;
        assert!(2.0 * f(x + eps) - f(x) >= x / 8.0);
        assert!(f(0.0) == 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(lemma57_checks(0.0).is_err());
        assert!(lemma57_checks(0.125).is_err());
    }
}
