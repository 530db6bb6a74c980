//! Target densities, the drift function `V(x) = c_V π(x)^{-1/2}`, and
//! numeric verifiers for the super-exponential tail and regular-contour
//! conditions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{log_gaussian_density, SpdMatrix, Vector};
use crate::rng::{stream, RngStream};

/// Finite-difference step used when a target has no analytic gradient.
pub const FD_STEP: f64 = 1e-5;

/// `log V` above this value is reported as an overflow (`V = +∞`).
pub const MAX_LOG_V: f64 = 709.0;

/// Default threshold below which the outermost tail supremum must fall.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 10.0;

/// Default margin for the contour condition.
pub const DEFAULT_CONTOUR_MARGIN: f64 = 0.05;

/// An unnormalized log-density on `ℝ^d`.
pub trait TargetDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &Vector) -> f64;

    /// `∇ log π(x)`. The default is a central finite difference.
    fn gradient(&self, x: &Vector) -> Vector {
        central_difference(self, x, FD_STEP)
    }

    /// `log sup_x π(x)` when known in closed form.
    fn log_sup(&self) -> Option<f64> {
        None
    }

    /// Mean and covariance of the normalized density, when finite and known.
    fn moments(&self) -> Option<(Vector, DMatrix<f64>)> {
        None
    }
}

pub fn central_difference<T: TargetDensity + ?Sized>(t: &T, x: &Vector, h: f64) -> Vector {
    let mut g = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let up = t.log_density(&probe);
        probe[i] = xi - h;
        let down = t.log_density(&probe);
        probe[i] = xi;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Serializable description of a built-in target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    PowerExponential {
        dim: usize,
        p: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
    CauchyLike {
        dim: usize,
    },
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::PowerExponential { dim, .. } | TargetSpec::CauchyLike { dim } => *dim,
            TargetSpec::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
        }
    }

    pub fn build(&self) -> Result<Target> {
        match self {
            TargetSpec::Gaussian { mean, cov } => {
                Target::gaussian(DVector::from_vec(mean.clone()), SpdMatrix::from_rows(cov)?)
            }
            TargetSpec::PowerExponential { dim, p } => Target::power_exponential(*dim, *p),
            TargetSpec::GaussianMixture { weights, means, covs } => {
                if means.len() != covs.len() {
                    return Err(Error::InvalidInput("mixture needs one covariance per mean".into()));
                }
                let comps = means
                    .iter()
                    .zip(covs)
                    .map(|(m, c)| Ok((DVector::from_vec(m.clone()), SpdMatrix::from_rows(c)?)))
                    .collect::<Result<Vec<_>>>()?;
                Target::gaussian_mixture(weights, comps)
            }
            TargetSpec::CauchyLike { dim } => Target::cauchy_like(*dim),
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Gaussian {
        mean: Vector,
        cov: SpdMatrix,
    },
    PowerExponential {
        p: f64,
    },
    Mixture {
        log_weights: Vec<f64>,
        means: Vec<Vector>,
        covs: Vec<SpdMatrix>,
    },
    CauchyLike,
}

/// A built-in target density.
#[derive(Clone, Debug)]
pub struct Target {
    dim: usize,
    kind: Kind,
    log_sup: f64,
    spec: TargetSpec,
}

impl Target {
    /// `π ∝ exp(-(x-μ)ᵀΣ⁻¹(x-μ)/2)`.
    pub fn gaussian(mean: Vector, cov: SpdMatrix) -> Result<Self> {
        check_dim(cov.dim(), mean.len())?;
        let spec = TargetSpec::Gaussian {
            mean: mean.iter().copied().collect(),
            cov: cov.to_rows(),
        };
        Ok(Target {
            dim: mean.len(),
            kind: Kind::Gaussian { mean, cov },
            log_sup: 0.0,
            spec,
        })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::gaussian(DVector::zeros(dim), SpdMatrix::identity(dim)).expect("identity is SPD")
    }

    /// `π ∝ exp(-‖x‖^p)`, `p > 1`.
    pub fn power_exponential(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidInput(format!("power_exponential needs p > 1, got {p}")));
        }
        Ok(Target {
            dim,
            kind: Kind::PowerExponential { p },
            log_sup: 0.0,
            spec: TargetSpec::PowerExponential { dim, p },
        })
    }

    /// Finite mixture of Gaussians. Weights are normalized; the supremum of
    /// the density is located by multi-start ascent from the component means.
    pub fn gaussian_mixture(weights: &[f64], comps: Vec<(Vector, SpdMatrix)>) -> Result<Self> {
        if comps.is_empty() || weights.len() != comps.len() {
            return Err(Error::InvalidInput(
                "mixture needs one positive weight per component".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("mixture weights must be positive".into()));
        }
        let dim = comps[0].0.len();
        for (m, c) in &comps {
            check_dim(dim, m.len())?;
            check_dim(dim, c.dim())?;
        }
        let total: f64 = weights.iter().sum();
        let spec = TargetSpec::GaussianMixture {
            weights: weights.to_vec(),
            means: comps.iter().map(|(m, _)| m.iter().copied().collect()).collect(),
            covs: comps.iter().map(|(_, c)| c.to_rows()).collect(),
        };
        let (means, covs): (Vec<_>, Vec<_>) = comps.into_iter().unzip();
        let mut t = Target {
            dim,
            kind: Kind::Mixture {
                log_weights: weights.iter().map(|w| (w / total).ln()).collect(),
                means: means.clone(),
                covs,
            },
            log_sup: 0.0,
            spec,
        };
        t.log_sup = numeric_log_sup(&t, &means);
        Ok(t)
    }

    /// `π ∝ (1 + ‖x‖²)^{-(d+1)/2}`: heavy tailed, used as a negative control.
    pub fn cauchy_like(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        Ok(Target {
            dim,
            kind: Kind::CauchyLike,
            log_sup: 0.0,
            spec: TargetSpec::CauchyLike { dim },
        })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Gaussian { .. } => "gaussian",
            Kind::PowerExponential { .. } => "power_exponential",
            Kind::Mixture { .. } => "gaussian_mixture",
            Kind::CauchyLike => "cauchy_like",
        }
    }
}

impl TargetDensity for Target {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &Vector) -> f64 {
        match &self.kind {
            Kind::Gaussian { mean, cov } => -0.5 * cov.inv_quad_form(&(x - mean)),
            Kind::PowerExponential { p } => -x.norm().powf(*p),
            Kind::Mixture {
                log_weights,
                means,
                covs,
            } => {
                let terms: Vec<f64> = log_weights
                    .iter()
                    .zip(means.iter().zip(covs))
                    .map(|(lw, (m, c))| lw + log_gaussian_density(x, m, c).unwrap_or(f64::NAN))
                    .collect();
                log_sum_exp(&terms)
            }
            Kind::CauchyLike => -0.5 * (self.dim as f64 + 1.0) * x.norm_squared().ln_1p(),
        }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match &self.kind {
            Kind::Gaussian { mean, cov } => -cov.solve(&(x - mean)),
            Kind::PowerExponential { p } => {
                let r = x.norm();
                if r == 0.0 {
                    DVector::zeros(self.dim)
                } else {
                    x * (-p * r.powf(p - 2.0))
                }
            }
            Kind::Mixture {
                log_weights,
                means,
                covs,
            } => {
                let terms: Vec<f64> = log_weights
                    .iter()
                    .zip(means.iter().zip(covs))
                    .map(|(lw, (m, c))| lw + log_gaussian_density(x, m, c).unwrap_or(f64::NAN))
                    .collect();
                let lse = log_sum_exp(&terms);
                let mut g = DVector::zeros(self.dim);
                for (t, (m, c)) in terms.iter().zip(means.iter().zip(covs)) {
                    g -= c.solve(&(x - m)) * (t - lse).exp();
                }
                g
            }
            Kind::CauchyLike => x * (-(self.dim as f64 + 1.0) / (1.0 + x.norm_squared())),
        }
    }

    fn log_sup(&self) -> Option<f64> {
        Some(self.log_sup)
    }

    fn moments(&self) -> Option<(Vector, DMatrix<f64>)> {
        let d = self.dim;
        match &self.kind {
            Kind::Gaussian { mean, cov } => Some((mean.clone(), cov.matrix().clone())),
            Kind::PowerExponential { p } => {
                // E‖x‖² = Γ((d+2)/p) / Γ(d/p) for π ∝ exp(-‖x‖^p).
                let df = d as f64;
                let second = (ln_gamma((df + 2.0) / p) - ln_gamma(df / p)).exp();
                Some((DVector::zeros(d), DMatrix::identity(d, d) * (second / df)))
            }
            Kind::Mixture {
                log_weights,
                means,
                covs,
            } => {
                let mut m = DVector::zeros(d);
                let mut s = DMatrix::zeros(d, d);
                for (lw, (mu, c)) in log_weights.iter().zip(means.iter().zip(covs)) {
                    let w = lw.exp();
                    m += mu * w;
                    s += (c.matrix() + mu * mu.transpose()) * w;
                }
                let cov = s - &m * m.transpose();
                Some((m, cov))
            }
            Kind::CauchyLike => None,
        }
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Multi-start gradient ascent on `log π` with backtracking; returns the
/// largest value found.
pub fn numeric_log_sup<T: TargetDensity + ?Sized>(t: &T, starts: &[Vector]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for start in starts {
        let mut x = start.clone();
        let mut fx = t.log_density(&x);
        for _ in 0..2000 {
            let g = t.gradient(&x);
            let gn2 = g.norm_squared();
            if !gn2.is_finite() || gn2 < 1e-24 {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-16 {
                let y = &x + &g * step;
                let fy = t.log_density(&y);
                if fy >= fx + 1e-4 * step * gn2 {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best = best.max(fx);
    }
    best
}

fn default_starts(d: usize) -> Vec<Vector> {
    let mut starts = vec![DVector::zeros(d)];
    let mut rng = stream(0x5eed_5eed);
    for scale in [1.0, 3.0] {
        for _ in 0..4 {
            starts.push(DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal)));
        }
    }
    starts
}

/// `V(x) = c_V π(x)^{-1/2}` with `c_V = (sup π)^{1/2}`, evaluated in log
/// space.
#[derive(Clone, Copy)]
pub struct DriftFunction<'a> {
    target: &'a dyn TargetDensity,
    log_c_v: f64,
}

impl<'a> DriftFunction<'a> {
    pub fn new(target: &'a dyn TargetDensity) -> Self {
        let log_sup = target
            .log_sup()
            .unwrap_or_else(|| numeric_log_sup(target, &default_starts(target.dim())));
        DriftFunction {
            target,
            log_c_v: 0.5 * log_sup,
        }
    }

    pub fn target(&self) -> &'a dyn TargetDensity {
        self.target
    }

    /// `log c_V = (1/2) log sup π`.
    pub fn log_c_v(&self) -> f64 {
        self.log_c_v
    }

    pub fn log_sup(&self) -> f64 {
        2.0 * self.log_c_v
    }

    pub fn log_v(&self, x: &Vector) -> f64 {
        self.log_v_from_log_density(self.target.log_density(x))
    }

    pub fn log_v_from_log_density(&self, log_pi: f64) -> f64 {
        self.log_c_v - 0.5 * log_pi
    }

    /// `V(x)`, or `+∞` when `log V(x)` exceeds [`MAX_LOG_V`]. Callers must
    /// treat the infinite value as a drift violation.
    pub fn value(&self, x: &Vector) -> f64 {
        let lv = self.log_v(x);
        if lv > MAX_LOG_V || lv.is_nan() {
            f64::INFINITY
        } else {
            lv.exp()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub rho: f64,
    pub shell_radii: Vec<f64>,
    pub shell_suprema: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourReport {
    pub shell_radii: Vec<f64>,
    pub shell_suprema: Vec<f64>,
    pub verdict: Verdict,
}

fn random_direction(d: usize, rng: &mut RngStream) -> Vector {
    loop {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = z.norm();
        if n > 1e-12 {
            return z / n;
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.iter().any(|r| !(r.is_finite() && *r >= 1.0)) {
        return Err(Error::InvalidInput("shell radii must be finite and ≥ 1".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("shell radii must be strictly increasing".into()));
    }
    Ok(())
}

/// Supremum over sampled directions of `integrand(r u)` for each radius.
/// Returns `None` for a shell where the integrand was not finite.
fn shell_suprema<F>(d: usize, radii: &[f64], dirs: usize, rng: &mut RngStream, f: F) -> Vec<Option<f64>>
where
    F: Fn(&Vector) -> f64,
{
    radii
        .iter()
        .map(|&r| {
            let mut sup = f64::NEG_INFINITY;
            for _ in 0..dirs.max(1) {
                let x = random_direction(d, rng) * r;
                let v = f(&x);
                if !v.is_finite() {
                    return None;
                }
                sup = sup.max(v);
            }
            Some(sup)
        })
        .collect()
}

/// Checks `lim sup_{‖x‖→∞} x/‖x‖^ρ · ∇log π(x) = -∞` on a sequence of
/// shells using [`DEFAULT_DIVERGENCE_THRESHOLD`].
pub fn verify_super_exponential(
    t: &dyn TargetDensity,
    rho: f64,
    radii: &[f64],
    dirs_per_shell: usize,
    rng: &mut RngStream,
) -> Result<TailReport> {
    verify_super_exponential_with(t, rho, radii, dirs_per_shell, DEFAULT_DIVERGENCE_THRESHOLD, rng)
}

/// As [`verify_super_exponential`] with an explicit threshold. The verdict
/// is `pass` when the last three suprema strictly decrease and the last one
/// lies below `-threshold`, `fail` when the last three are non-decreasing
/// (the suprema do not diverge), and `inconclusive` otherwise.
pub fn verify_super_exponential_with(
    t: &dyn TargetDensity,
    rho: f64,
    radii: &[f64],
    dirs_per_shell: usize,
    threshold: f64,
    rng: &mut RngStream,
) -> Result<TailReport> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("rho must exceed 1, got {rho}")));
    }
    check_radii(radii)?;
    let sups = shell_suprema(t.dim(), radii, dirs_per_shell, rng, |x| {
        x.dot(&t.gradient(x)) / x.norm().powf(rho)
    });
    let complete = sups.iter().all(Option::is_some);
    let shell_suprema: Vec<f64> = sups.iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    let verdict = if complete {
        tail_verdict(&shell_suprema, threshold)
    } else {
        Verdict::Inconclusive
    };
    Ok(TailReport {
        rho,
        shell_radii: radii.to_vec(),
        shell_suprema,
        verdict,
    })
}

fn tail_verdict(sups: &[f64], threshold: f64) -> Verdict {
    if sups.len() < 3 {
        return Verdict::Inconclusive;
    }
    let w = &sups[sups.len() - 3..];
    let tol = |a: f64| 1e-12 * a.abs().max(1.0);
    if w[0] > w[1] && w[1] > w[2] && w[2] < -threshold {
        Verdict::Pass
    } else if w[1] >= w[0] - tol(w[0]) && w[2] >= w[1] - tol(w[1]) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Checks the contour condition `lim sup (x/‖x‖)·∇π/‖∇π‖ < 0`, using
/// [`DEFAULT_CONTOUR_MARGIN`].
pub fn verify_contour_regularity(
    t: &dyn TargetDensity,
    radii: &[f64],
    dirs_per_shell: usize,
    rng: &mut RngStream,
) -> Result<ContourReport> {
    verify_contour_regularity_with(t, radii, dirs_per_shell, DEFAULT_CONTOUR_MARGIN, rng)
}

/// Pass when every one of the (up to three) outermost shell suprema is below
/// `-margin`; fail when any of them is non-negative.
pub fn verify_contour_regularity_with(
    t: &dyn TargetDensity,
    radii: &[f64],
    dirs_per_shell: usize,
    margin: f64,
    rng: &mut RngStream,
) -> Result<ContourReport> {
    if !(margin > 0.0) {
        return Err(Error::InvalidInput("contour margin must be positive".into()));
    }
    if radii.is_empty() {
        return Ok(ContourReport {
            shell_radii: vec![],
            shell_suprema: vec![],
            verdict: Verdict::Inconclusive,
        });
    }
    check_radii(radii)?;
    let sups = shell_suprema(t.dim(), radii, dirs_per_shell, rng, |x| contour_cosine(t, x));
    let complete = sups.iter().all(Option::is_some);
    let shell_suprema: Vec<f64> = sups.iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    let outer = &shell_suprema[shell_suprema.len().saturating_sub(3)..];
    let verdict = if !complete {
        Verdict::Inconclusive
    } else if outer.iter().all(|s| *s < -margin) {
        Verdict::Pass
    } else if outer.iter().any(|s| *s >= 0.0) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(ContourReport {
        shell_radii: radii.to_vec(),
        shell_suprema,
        verdict,
    })
}

/// `(x/‖x‖)·(∇π(x)/‖∇π(x)‖)`; `∇π/‖∇π‖ = ∇log π/‖∇log π‖` because `π > 0`.
pub fn contour_cosine(t: &dyn TargetDensity, x: &Vector) -> f64 {
    let g = t.gradient(x);
    x.dot(&g) / (x.norm() * g.norm())
}

/// Exponential lower bound `V(y) ≥ c·e^{γ‖y‖}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub gamma: f64,
    pub c: f64,
}

fn probe_directions(d: usize) -> Vec<Vector> {
    if d == 1 {
        return vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)];
    }
    let mut dirs = Vec::with_capacity(2 * d + 32);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(d);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = stream(0x6a0_7e57);
    dirs.extend((0..32).map(|_| random_direction(d, &mut rng)));
    dirs
}

/// Fits `V(y) ≥ c e^{γ‖y‖}` following the radial-decay argument: with
/// `γ₀ = -sup_{‖x‖≥R} (x/‖x‖)·∇log π(x)` estimated on the probe shells,
/// `γ = γ₀/(4R)` and `c = e^{-γ₀/2} · inf_{‖y‖≤2R} V(y)`. The fit is then
/// checked at every probe point (the origin is always probed).
pub fn radial_growth_estimate(df: &DriftFunction<'_>, r: f64, probe_radii: &[f64]) -> Result<GrowthFit> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput("R must be positive".into()));
    }
    let t = df.target();
    let dirs = probe_directions(t.dim());
    let outer: Vec<f64> = probe_radii.iter().copied().filter(|p| *p >= r).collect();
    if outer.is_empty() {
        return Err(Error::FitFailed("no probe radius at or beyond R".into()));
    }
    let mut sup_radial = f64::NEG_INFINITY;
    for &p in &outer {
        for u in &dirs {
            let x = u * p;
            let v = u.dot(&t.gradient(&x));
            if !v.is_finite() {
                return Err(Error::FitFailed(format!("non-finite gradient at radius {p}")));
            }
            sup_radial = sup_radial.max(v);
        }
    }
    let gamma0 = -sup_radial;
    if !(gamma0 > 0.0) {
        return Err(Error::FitFailed(format!(
            "radial derivative of log π is not negative beyond R (sup = {sup_radial})"
        )));
    }
    let gamma = gamma0 / (4.0 * r);

    let mut points = vec![DVector::zeros(t.dim())];
    for &p in probe_radii {
        for u in &dirs {
            points.push(u * p);
        }
    }
    for u in &dirs {
        points.push(u * r);
        points.push(u * (2.0 * r));
    }
    let inf_inner = points
        .iter()
        .filter(|y| y.norm() <= 2.0 * r)
        .map(|y| df.log_v(y))
        .fold(f64::INFINITY, f64::min);
    let log_c = inf_inner - 0.5 * gamma0;
    for y in &points {
        if df.log_v(y) < log_c + gamma * y.norm() - 1e-12 {
            return Err(Error::FitFailed(format!("bound violated at ‖y‖ = {}", y.norm())));
        }
    }
    Ok(GrowthFit { gamma, c: log_c.exp() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRatio {
    /// Largest over smallest contour radius.
    pub m_hat: f64,
    /// `e^{2π tan α₀}`, infinite when the contour condition fails.
    pub m_bound: f64,
    /// `arccos(-sup (x/‖x‖)·∇π/‖∇π‖)` over the traced contour.
    pub alpha0: f64,
    pub condition_holds: bool,
    pub bound_holds: bool,
    pub radii: Vec<f64>,
}

/// Traces `{π = level}` by radial bisection from the origin and compares the
/// radius spread with the bound `M = e^{2π tan α₀}`.
///
/// `level` is a value of the (unnormalized) density `exp(log_density)`; the
/// origin must lie strictly inside the super-level set.
pub fn contour_ratio_check(t: &dyn TargetDensity, level: f64, n_points: usize) -> Result<ContourRatio> {
    let d = t.dim();
    if d < 2 {
        return Err(Error::InvalidInput("contour ratio check requires d ≥ 2".into()));
    }
    if !(level > 0.0) || n_points == 0 {
        return Err(Error::InvalidInput("level must be positive and n_points ≥ 1".into()));
    }
    let log_level = level.ln();
    let origin = DVector::zeros(d);
    if !(t.log_density(&origin) > log_level) {
        return Err(Error::InvalidInput("origin is not inside the level set".into()));
    }
    let dirs: Vec<Vector> = if d == 2 {
        (0..n_points)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n_points as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()
    } else {
        let mut rng = stream(0xc0_7042);
        (0..n_points).map(|_| random_direction(d, &mut rng)).collect()
    };

    let mut radii = Vec::with_capacity(n_points);
    let mut sup_cos = f64::NEG_INFINITY;
    for (k, u) in dirs.iter().enumerate() {
        let above = |r: f64| t.log_density(&(u * r)) > log_level;
        let mut hi = 1.0;
        let mut doublings = 0;
        while above(hi) {
            hi *= 2.0;
            doublings += 1;
            if doublings > 1000 || !hi.is_finite() {
                return Err(Error::ContourNotFound { direction: k });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if above(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let c = contour_cosine(t, &(u * r));
        if !c.is_finite() {
            return Err(Error::ContourNotFound { direction: k });
        }
        sup_cos = sup_cos.max(c);
        radii.push(r);
    }
    let rmax = radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let m_hat = rmax / rmin;
    let condition_holds = sup_cos < 0.0;
    let alpha0 = (-sup_cos).clamp(-1.0, 1.0).acos();
    let m_bound = if condition_holds {
        (2.0 * std::f64::consts::PI * alpha0.tan()).exp()
    } else {
        f64::INFINITY
    };
    Ok(ContourRatio {
        m_hat,
        m_bound,
        alpha0,
        condition_holds,
        bound_holds: m_hat <= m_bound,
        radii,
    })
}
