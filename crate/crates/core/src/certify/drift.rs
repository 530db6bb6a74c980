use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SpdMatrix, Vector};
use crate::rng::{derive_seed, stream, RngStream};
use crate::targets::{DriftFunction, TargetDensity};

/// Half-width, in proposal standard deviations, of the quadrature box.
const Z_RANGE: f64 = 12.0;
/// `P(|Z| > 12)` for a standard normal, rounded up.
const Z_TAIL: f64 = 4e-33;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauMethod {
    /// Composite trapezoid on `[−12, 12]^d` in whitened coordinates with
    /// `points` nodes per axis; the error estimate compares against the
    /// grid with half the spacing. Only for `d ≤ 2`.
    Quadrature { points: usize },
    /// Plain Monte Carlo with `samples` proposal draws.
    MonteCarlo { samples: usize, seed: u64 },
}

impl TauMethod {
    pub fn default_for_dim(d: usize) -> Self {
        match d {
            1 => TauMethod::Quadrature { points: 4001 },
            2 => TauMethod::Quadrature { points: 161 },
            _ => TauMethod::MonteCarlo {
                samples: 20_000,
                seed: 0x7A0,
            },
        }
    }
}

/// `τ(x) = 1 − P_vV(x)/V(x)` split as `accept_term − reject_term`, where
/// `accept_term = ∫_{π(y) ≥ π(x)} (1 − √(π(x)/π(y))) q_v(y − x) dy` and
/// `reject_term = ∫_{π(y) < π(x)} √(π(y)/π(x)) (1 − √(π(y)/π(x))) q_v(y − x) dy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau: f64,
    /// Estimated absolute error of `tau` (three standard errors for Monte
    /// Carlo).
    pub err: f64,
    pub std_error: Option<f64>,
    pub accept_term: f64,
    pub reject_term: f64,
    pub evaluations: u64,
}

impl TauEstimate {
    /// `P_vV(x)/V(x)`.
    pub fn drift_ratio(&self) -> f64 {
        1.0 - self.tau
    }
}

/// Both integrands at a proposal with `log π(y) = ly`. Each lies in
/// `[0, 1]`, so nothing here can overflow once `π(x) > 0`.
fn integrands(lx: f64, ly: f64) -> Result<(f64, f64)> {
    if ly.is_nan() {
        return Err(Error::QuadratureOverflow);
    }
    let lr = 0.5 * (ly - lx);
    Ok(if lr >= 0.0 {
        (-(-lr).exp_m1(), 0.0)
    } else {
        let r = lr.exp();
        (0.0, r * (1.0 - r))
    })
}

pub fn drift_ratio_tau(t: &dyn TargetDensity, v: &SpdMatrix, x: &Vector, method: TauMethod) -> Result<TauEstimate> {
    let d = t.dim();
    check_dim(d, x.len())?;
    check_dim(d, v.dim())?;
    let lx = t.log_density(x);
    if !lx.is_finite() {
        return Err(Error::QuadratureOverflow);
    }
    match method {
        TauMethod::Quadrature { points } => {
            if d > 2 {
                return Err(Error::InvalidInput("quadrature is available only for d ≤ 2".into()));
            }
            if points < 3 {
                return Err(Error::InvalidInput("quadrature needs at least 3 points".into()));
            }
            let coarse = tensor_trapezoid(t, v, x, lx, points)?;
            let fine = tensor_trapezoid(t, v, x, lx, 2 * points - 1)?;
            let tau = fine.0 - fine.1;
            let err = ((coarse.0 - coarse.1) - tau).abs() + Z_TAIL * d as f64;
            Ok(TauEstimate {
                tau,
                err,
                std_error: None,
                accept_term: fine.0,
                reject_term: fine.1,
                evaluations: coarse.2 + fine.2,
            })
        }
        TauMethod::MonteCarlo { samples, seed } => monte_carlo(t, v, x, lx, samples, &mut stream(seed)),
    }
}

/// `(accept_term, reject_term, evaluations)` on a tensor grid of `n` nodes
/// per axis over whitened coordinates `y = x + L z`.
fn tensor_trapezoid(t: &dyn TargetDensity, v: &SpdMatrix, x: &Vector, lx: f64, n: usize) -> Result<(f64, f64, u64)> {
    let d = x.len();
    let h = 2.0 * Z_RANGE / (n - 1) as f64;
    let z: Vec<f64> = (0..n).map(|i| -Z_RANGE + i as f64 * h).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            end * h * (-0.5 * z[i] * z[i]).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .collect();
    let l = v.cholesky_factor();
    let row = |i: usize| -> Result<(f64, f64)> {
        let mut acc = (0.0, 0.0);
        let inner = if d == 1 { 1 } else { n };
        for j in 0..inner {
            let (zz, ww) = if d == 1 {
                (DVector::from_element(1, z[i]), w[i])
            } else {
                (DVector::from_vec(vec![z[i], z[j]]), w[i] * w[j])
            };
            if ww == 0.0 {
                continue;
            }
            let y = x + l * zz;
            let (a, r) = integrands(lx, t.log_density(&y))?;
            acc.0 += ww * a;
            acc.1 += ww * r;
        }
        Ok(acc)
    };
    let parts: Vec<(f64, f64)> = if d == 1 {
        (0..n).map(row).collect::<Result<_>>()?
    } else {
        (0..n).into_par_iter().map(row).collect::<Result<_>>()?
    };
    let (a, r) = parts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
    Ok((a, r, (n as u64).pow(d as u32)))
}

fn monte_carlo(
    t: &dyn TargetDensity,
    v: &SpdMatrix,
    x: &Vector,
    lx: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<TauEstimate> {
    if samples < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 samples".into()));
    }
    let d = x.len();
    let l = v.cholesky_factor();
    let (mut sa, mut sr, mut s, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = x + l * z;
        let (a, r) = integrands(lx, t.log_density(&y))?;
        sa += a;
        sr += r;
        s += a - r;
        s2 += (a - r) * (a - r);
    }
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let se = (var / n).sqrt();
    Ok(TauEstimate {
        tau: mean,
        err: 3.0 * se,
        std_error: Some(se),
        accept_term: sa / n,
        reject_term: sr / n,
        evaluations: samples as u64,
    })
}

/// Where and how densely [`fit_drift_certificate`] probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSearch {
    /// Candidate radii of `C = {‖x‖ ≤ R}`, tried in increasing order.
    pub radii: Vec<f64>,
    /// Outermost probe radius.
    pub probe_max: f64,
    /// Number of log-spaced probe shells between the smallest radius and
    /// `probe_max` (the candidate radii are always probed as well).
    pub shells: usize,
    /// Probe directions per shell for `d ≥ 2`.
    pub directions: usize,
    /// Points per axis of the grid used to bound `sup_C P_vV`.
    pub ball_points: usize,
    pub holdout: usize,
    pub method: Option<TauMethod>,
    pub seed: u64,
}

impl Default for CertificateSearch {
    fn default() -> Self {
        let mut radii: Vec<f64> = (2..=40).map(|k| 0.25 * k as f64).collect();
        radii.extend([12.0, 15.0, 20.0, 30.0, 50.0]);
        CertificateSearch {
            radii,
            probe_max: 1e3,
            shells: 80,
            directions: 16,
            ball_points: 201,
            holdout: 200,
            method: None,
            seed: 0x5EED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureBudget {
    pub method: TauMethod,
    pub probes: usize,
    pub ball_points: usize,
    pub evaluations: u64,
    /// Largest error estimate over all probes, relative to `V(x)` for the
    /// drift ratio.
    pub max_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub points: usize,
    /// Largest `(P_vV − λV − b 1_C)/V` seen, after crediting the error
    /// estimate. Non-positive when the check passes.
    pub max_violation: f64,
    pub passed: bool,
}

/// A drift/minorization pair for the RWM kernel with proposal covariance
/// `v`, with `C` the closed ball of radius `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub lambda: f64,
    pub b: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    pub v: SpdMatrix,
    /// Largest `V` seen on the grid of `C`.
    pub sup_c_v: f64,
    /// `min (τ̂ − err)` over probes outside `C`.
    pub min_outer_tau: f64,
    pub quadrature_budget: QuadratureBudget,
    pub holdout: HoldoutReport,
}

/// Inflation applied to the grid supremum of `P_vV` on `C` when setting `b`.
const B_SAFETY: f64 = 1.05;

/// Finds the smallest candidate radius `R` such that every probe with
/// `‖x‖ ≥ R` has `τ̂ − err ≥ margin`, then sets `λ = 1 − margin` and
/// `b = 1.05 · max(sup_C V, sup_C P_vV)` over a grid of `C`, and accepts the
/// result only if it also holds on fresh holdout points.
pub fn fit_drift_certificate(
    t: &dyn TargetDensity,
    v: &SpdMatrix,
    search: &CertificateSearch,
    margin: f64,
) -> Result<DriftCertificate> {
    let d = t.dim();
    check_dim(d, v.dim())?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidInput(format!("margin must lie in (0, 1), got {margin}")));
    }
    let mut radii = search.radii.clone();
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput("search radii must be positive".into()));
    }
    radii.sort_by(f64::total_cmp);
    if search.probe_max < radii[radii.len() - 1] {
        return Err(Error::InvalidInput(
            "probe_max must cover every candidate radius".into(),
        ));
    }
    let method = search.method.unwrap_or_else(|| TauMethod::default_for_dim(d));
    let df = DriftFunction::new(t);
    let lambda = 1.0 - margin;

    let mut shell_radii = log_spaced(radii[0], search.probe_max, search.shells.max(2));
    shell_radii.extend(radii.iter().copied());
    shell_radii.sort_by(f64::total_cmp);
    shell_radii.dedup();
    let dirs = directions(d, search.directions, search.seed);
    let probes: Vec<(f64, Vector)> = shell_radii
        .iter()
        .flat_map(|&r| dirs.iter().map(move |u| (r, u * r)))
        .collect();
    let estimates = evaluate(t, v, probes.iter().map(|p| &p.1), method, derive_seed(search.seed, 1))?;
    let mut evaluations: u64 = estimates.iter().map(|e| e.evaluations).sum();
    let mut max_err = estimates.iter().map(|e| e.err).fold(0.0, f64::max);

    let mut best = f64::NEG_INFINITY;
    for &radius in &radii {
        let min_outer = probes
            .iter()
            .zip(&estimates)
            .filter(|(p, _)| p.0 >= radius)
            .map(|(_, e)| e.tau - e.err)
            .fold(f64::INFINITY, f64::min);
        best = best.max(min_outer);
        if min_outer < margin {
            continue;
        }

        let ball = ball_points(d, radius, search.ball_points, derive_seed(search.seed, 2));
        let ball_est = evaluate(t, v, ball.iter(), method, derive_seed(search.seed, 3))?;
        evaluations += ball_est.iter().map(|e| e.evaluations).sum::<u64>();
        max_err = ball_est.iter().map(|e| e.err).fold(max_err, f64::max);
        let mut sup_v: f64 = 0.0;
        let mut sup_pv: f64 = 0.0;
        for (x, e) in ball.iter().zip(&ball_est) {
            let vx = df.value(x);
            sup_v = sup_v.max(vx);
            sup_pv = sup_pv.max(vx * (e.drift_ratio() + e.err));
        }
        let b = B_SAFETY * sup_v.max(sup_pv);
        if !b.is_finite() {
            continue;
        }

        let hold = holdout_points(d, radius, search.probe_max, search.holdout, derive_seed(search.seed, 4));
        let hold_est = evaluate(t, v, hold.iter(), method, derive_seed(search.seed, 5))?;
        evaluations += hold_est.iter().map(|e| e.evaluations).sum::<u64>();
        let mut max_violation = f64::NEG_INFINITY;
        for (x, e) in hold.iter().zip(&hold_est) {
            let ratio_lo = e.drift_ratio() - e.err;
            let viol = if x.norm() <= radius {
                // (P_vV − λV − b)/V, evaluated in a form that survives V = ∞.
                let vx = df.value(x);
                ratio_lo - lambda - if vx.is_finite() { b / vx } else { 0.0 }
            } else {
                ratio_lo - lambda
            };
            max_violation = max_violation.max(viol);
        }
        let passed = max_violation <= 0.0;
        if !passed {
            continue;
        }
        let delta = estimate_minorization(t, v, radius)?;
        return Ok(DriftCertificate {
            lambda,
            b,
            radius,
            delta,
            v: v.clone(),
            sup_c_v: sup_v,
            min_outer_tau: min_outer,
            quadrature_budget: QuadratureBudget {
                method,
                probes: probes.len(),
                ball_points: ball.len(),
                evaluations,
                max_err,
            },
            holdout: HoldoutReport {
                points: hold.len(),
                max_violation,
                passed,
            },
        });
    }
    Err(Error::NoDriftFound(format!(
        "no radius in [{}, {}] gives τ − err ≥ {margin} outside C (best {best:.3e})",
        radii[0],
        radii[radii.len() - 1]
    )))
}

fn evaluate<'a>(
    t: &dyn TargetDensity,
    v: &SpdMatrix,
    points: impl Iterator<Item = &'a Vector>,
    method: TauMethod,
    seed: u64,
) -> Result<Vec<TauEstimate>> {
    let pts: Vec<&Vector> = points.collect();
    pts.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let m = match method {
                TauMethod::MonteCarlo { samples, .. } => TauMethod::MonteCarlo {
                    samples,
                    seed: derive_seed(seed, i as u64),
                },
                q => q,
            };
            drift_ratio_tau(t, v, x, m)
        })
        .collect()
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
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

/// Unit probe directions: `±1` in one dimension, `count` equally spaced
/// angles in two, and the `±e_i` axes plus `count` random directions
/// beyond.
fn directions(d: usize, count: usize, seed: u64) -> Vec<Vector> {
    match d {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count.max(4))
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count.max(4) as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(d);
                    e[i] = s;
                    out.push(e);
                }
            }
            let mut rng = stream(seed);
            out.extend((0..count).map(|_| random_direction(d, &mut rng)));
            out
        }
    }
}

/// Points of the closed ball of radius `r`, always including the origin and
/// points on the boundary sphere.
fn ball_points(d: usize, r: f64, n: usize, seed: u64) -> Vec<Vector> {
    let n = n.max(3) | 1;
    match d {
        1 => (0..n)
            .map(|i| DVector::from_element(1, -r + 2.0 * r * i as f64 / (n - 1) as f64))
            .collect(),
        2 => {
            let m = (n / 4).max(11) | 1;
            let mut out = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    let p = DVector::from_vec(vec![
                        -r + 2.0 * r * i as f64 / (m - 1) as f64,
                        -r + 2.0 * r * j as f64 / (m - 1) as f64,
                    ]);
                    if p.norm() <= r {
                        out.push(p);
                    }
                }
            }
            out.extend(directions(2, 64, seed).into_iter().map(|u| u * r));
            out
        }
        _ => {
            let mut rng = stream(seed);
            let mut out = vec![DVector::zeros(d)];
            out.extend(directions(d, 0, seed).into_iter().map(|u| u * r));
            for _ in 0..n {
                let u = random_direction(d, &mut rng);
                let rad = r * rng.random::<f64>().powf(1.0 / d as f64);
                out.push(&u * rad);
                out.push(random_direction(d, &mut rng) * r);
            }
            out
        }
    }
}

/// Half inside the ball of radius `2R`, half at log-uniform radii in
/// `[R, probe_max]`.
fn holdout_points(d: usize, r: f64, probe_max: f64, n: usize, seed: u64) -> Vec<Vector> {
    let mut rng = stream(seed);
    (0..n)
        .map(|i| {
            let u = random_direction(d, &mut rng);
            let w: f64 = rng.random();
            let rad = if i % 2 == 0 {
                2.0 * r * w
            } else {
                (r.ln() + (probe_max.ln() - r.ln()) * w).exp()
            };
            u * rad
        })
        .collect()
}

/// `log |B(0, R)|` in `d` dimensions.
pub(crate) fn log_ball_volume(d: usize, r: f64) -> f64 {
    let df = d as f64;
    0.5 * df * std::f64::consts::PI.ln() + df * r.ln() - ln_gamma(0.5 * df + 1.0)
}

/// Minorization constant on `C = {‖x‖ ≤ R}` with `ν` uniform on `C`:
///
/// `δ = |C| (2π)^{-d/2} det(v)^{-1/2} exp(−diam(C)²/(2κ')) inf_C π / sup π`,
///
/// with `κ'` the certified eigenvalue floor of `v` and `inf_C π` taken over
/// a grid of `C`. The value is clamped to `(0, 1]`.
pub fn estimate_minorization(t: &dyn TargetDensity, v: &SpdMatrix, radius: f64) -> Result<f64> {
    let d = t.dim();
    check_dim(d, v.dim())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let floor = v.certified_floor();
    if floor <= 0.0 {
        return Err(Error::InvalidInput(
            "proposal covariance has no certified eigenvalue floor".into(),
        ));
    }
    let df = DriftFunction::new(t);
    let log_inf = ball_points(d, radius, 401, 0xC0FFEE)
        .iter()
        .map(|x| t.log_density(x))
        .fold(f64::INFINITY, f64::min);
    let diam = 2.0 * radius;
    let log_delta = log_ball_volume(d, radius)
        - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * v.log_det()
        - diam * diam / (2.0 * floor)
        + log_inf
        - df.log_sup();
    Ok(log_delta.exp().clamp(f64::MIN_POSITIVE, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub det: f64,
    pub lambda: f64,
    pub delta: f64,
    /// `((1 − λ_v)⁻¹ ∨ δ_v⁻¹) / det(v)^{1/2}`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingAudit {
    pub rows: Vec<ScalingRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Every ratio is finite and positive, so a common constant exists.
    pub bounded: bool,
}

/// Certifies each proposal covariance in `vs` and tabulates how the
/// constants scale with `det(v)`. Every `v` must dominate `κI`.
pub fn det_scaling_audit(
    t: &dyn TargetDensity,
    vs: &[SpdMatrix],
    kappa: f64,
    search: &CertificateSearch,
    margin: f64,
) -> Result<ScalingAudit> {
    if vs.is_empty() {
        return Err(Error::InvalidInput("no proposal covariances to audit".into()));
    }
    for (i, v) in vs.iter().enumerate() {
        if v.certified_floor() < kappa {
            return Err(Error::InvalidInput(format!(
                "covariance {i} has eigenvalue floor {} below κ = {kappa}",
                v.certified_floor()
            )));
        }
    }
    let mut rows = Vec::with_capacity(vs.len());
    for v in vs {
        let cert = fit_drift_certificate(t, v, search, margin)?;
        let det = v.det();
        let ratio = (1.0 / (1.0 - cert.lambda)).max(1.0 / cert.delta) / det.sqrt();
        rows.push(ScalingRow {
            det,
            lambda: cert.lambda,
            delta: cert.delta,
            ratio,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(ScalingAudit {
        bounded: max_ratio.is_finite() && min_ratio > 0.0,
        rows,
        max_ratio,
        min_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::acceptance_probability;
    use crate::linalg::log_gaussian_density;
    use crate::targets::Target;

    fn v1(x: f64) -> Vector {
        DVector::from_element(1, x)
    }

    /// Independent oracle: 4001-point trapezoid on `y ∈ [−20, 20]` of the
    /// defining identity `P_vV(x) = ∫ q(y − x)[α V(y) + (1 − α) V(x)] dy`.
    fn oracle_tau(x: f64) -> f64 {
        let t = Target::standard_gaussian(1);
        let df = DriftFunction::new(&t);
        let v = SpdMatrix::identity(1);
        let n = 4001;
        let h = 40.0 / (n - 1) as f64;
        let vx = df.value(&v1(x));
        let mut pv = 0.0;
        for i in 0..n {
            let y = -20.0 + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let q = log_gaussian_density(&v1(y - x), &v1(0.0), &v).unwrap().exp();
            let a = acceptance_probability(&v1(x), &v1(y), &t).unwrap();
            pv += w * h * q * (a * df.value(&v1(y)) + (1.0 - a) * vx);
        }
        1.0 - pv / vx
    }

    #[test]
    fn tau_matches_dense_oracle() {
        let t = Target::standard_gaussian(1);
        let v = SpdMatrix::identity(1);
        let e = drift_ratio_tau(&t, &v, &v1(3.0), TauMethod::default_for_dim(1)).unwrap();
        assert!(
            (e.tau - oracle_tau(3.0)).abs() < 1e-6,
            "{} vs {}",
            e.tau,
            oracle_tau(3.0)
        );
        assert!(e.err < 1e-6);
        assert!((e.tau - (e.accept_term - e.reject_term)).abs() < 1e-15);
    }

    #[test]
    fn tau_non_positive_at_mode() {
        let t = Target::standard_gaussian(1);
        let e = drift_ratio_tau(&t, &SpdMatrix::identity(1), &v1(0.0), TauMethod::default_for_dim(1)).unwrap();
        assert!(e.tau <= 0.0);
        assert_eq!(e.accept_term, 0.0);
        let t2 = Target::standard_gaussian(2);
        let e2 = drift_ratio_tau(
            &t2,
            &SpdMatrix::identity(2),
            &DVector::zeros(2),
            TauMethod::default_for_dim(2),
        )
        .unwrap();
        assert!(e2.tau <= 0.0);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let t = Target::standard_gaussian(1);
        let v = SpdMatrix::scaled_identity(1, 2.0);
        for x in [0.5, 2.0, 4.0] {
            let q = drift_ratio_tau(&t, &v, &v1(x), TauMethod::default_for_dim(1)).unwrap();
            let m = drift_ratio_tau(
                &t,
                &v,
                &v1(x),
                TauMethod::MonteCarlo {
                    samples: 50_000,
                    seed: 11,
                },
            )
            .unwrap();
            let se = m.std_error.unwrap();
            assert!((q.tau - m.tau).abs() < 3.0 * (se * se + q.err * q.err).sqrt());
        }
    }

    #[test]
    fn quadrature_rejected_in_high_dimension() {
        let t = Target::standard_gaussian(3);
        let r = drift_ratio_tau(
            &t,
            &SpdMatrix::identity(3),
            &DVector::zeros(3),
            TauMethod::Quadrature { points: 11 },
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_density_point_overflows() {
        let t = Target::standard_gaussian(1);
        let r = drift_ratio_tau(&t, &SpdMatrix::identity(1), &v1(1e300), TauMethod::default_for_dim(1));
        assert_eq!(r, Err(Error::QuadratureOverflow));
    }

    #[test]
    fn gaussian_certificate() {
        let t = Target::standard_gaussian(1);
        let v = SpdMatrix::identity(1);
        let c = fit_drift_certificate(&t, &v, &CertificateSearch::default(), 0.05).unwrap();
        assert!(c.lambda < 1.0);
        assert!(c.holdout.passed && c.holdout.points == 200);
        assert!(c.sup_c_v <= c.b);
        assert!(c.delta > 0.0 && c.delta <= 1.0);
    }

    #[test]
    fn heavy_tails_have_no_certificate() {
        let t = Target::cauchy_like(1).unwrap();
        let r = fit_drift_certificate(&t, &SpdMatrix::identity(1), &CertificateSearch::default(), 0.05);
        assert!(matches!(r, Err(Error::NoDriftFound(_))));
    }

    #[test]
    fn zero_margin_rejected() {
        let t = Target::standard_gaussian(1);
        let r = fit_drift_certificate(&t, &SpdMatrix::identity(1), &CertificateSearch::default(), 0.0);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn minorization_dominates_kernel_on_subintervals() {
        let t = Target::standard_gaussian(1);
        let v = SpdMatrix::identity(1);
        let r = 3.0;
        let delta = estimate_minorization(&t, &v, r).unwrap();
        assert!(delta > 0.0 && delta <= 1.0);
        let mut rng = stream(21);
        for _ in 0..50 {
            let a = rng.random_range(-r..r);
            let b = rng.random_range(a..=r);
            let nu = (b - a) / (2.0 * r);
            for k in 0..=30 {
                let x = -r + 2.0 * r * k as f64 / 30.0;
                // Accepted mass landing in [a, b]; a lower bound on P(x, B).
                let n = 400;
                let h = (b - a) / n as f64;
                let mut p = 0.0;
                for i in 0..=n {
                    let y = a + i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let q = (-(y - x) * (y - x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    p += w * h * q * acceptance_probability(&v1(x), &v1(y), &t).unwrap();
                }
                assert!(p >= delta * nu * (1.0 - 1e-9), "x = {x}, B = [{a}, {b}]");
            }
        }
    }

    #[test]
    fn minorization_scaling_decomposes() {
        let t = Target::standard_gaussian(1);
        let v = SpdMatrix::identity(1);
        let v2 = v.scale(2.0);
        let r = 2.0;
        let d1 = estimate_minorization(&t, &v, r).unwrap();
        let d2 = estimate_minorization(&t, &v2, r).unwrap();
        let lhs = d2 * v2.det().sqrt() / (d1 * v.det().sqrt());
        let diam2 = (2.0 * r) * (2.0 * r);
        let rhs = (-diam2 / (2.0 * v2.certified_floor())).exp() / (-diam2 / (2.0 * v.certified_floor())).exp();
        assert!((lhs / rhs - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scaling_audit() {
        let t = Target::standard_gaussian(1);
        let vs: Vec<SpdMatrix> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&s| SpdMatrix::scaled_identity(1, s))
            .collect();
        let a = det_scaling_audit(&t, &vs, 0.01, &CertificateSearch::default(), 0.05).unwrap();
        assert!(a.bounded);
        assert_eq!(a.rows.len(), 4);
        let single = det_scaling_audit(&t, &vs[..1], 0.01, &CertificateSearch::default(), 0.05).unwrap();
        assert_eq!(single.max_ratio, single.min_ratio);
        let low = [SpdMatrix::scaled_identity(1, 0.001)];
        assert!(det_scaling_audit(&t, &low, 0.01, &CertificateSearch::default(), 0.05).is_err());
    }

    #[test]
    fn ball_volume() {
        assert!((log_ball_volume(1, 3.0).exp() - 6.0).abs() < 1e-12);
        assert!((log_ball_volume(2, 1.0).exp() - std::f64::consts::PI).abs() < 1e-12);
        assert!((log_ball_volume(3, 2.0).exp() - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-10);
    }
}
