//! Symmetric random-walk Metropolis with a Gaussian proposal, and its exact
//! discretization on a one-dimensional grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{log_gaussian_density, sample_gaussian, SpdMatrix, Vector};
use crate::rng::RngStream;
use crate::targets::{DriftFunction, TargetDensity};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelStep {
    pub next_state: Vector,
    pub accepted: bool,
    /// `log π(proposal) − log π(x)`.
    pub log_ratio: f64,
    pub proposal: Vector,
}

/// `min(1, π(y)/π(x))`.
pub fn acceptance_probability(x: &Vector, y: &Vector, t: &dyn TargetDensity) -> Result<f64> {
    let lx = t.log_density(x);
    if !lx.is_finite() {
        return Err(Error::InvalidState("π(x) = 0 at the current state".into()));
    }
    let ly = t.log_density(y);
    Ok(if ly >= lx { 1.0 } else { (ly - lx).exp() })
}

/// One Metropolis step from `x` with proposal `N(x, cov)`.
///
/// Consumes exactly one uniform and then one Gaussian vector from `rng`.
pub fn rwm_step(x: &Vector, t: &dyn TargetDensity, cov: &SpdMatrix, rng: &mut RngStream) -> Result<KernelStep> {
    let lx = t.log_density(x);
    step_from(x, lx, t, cov, rng).map(|(s, _)| s)
}

/// As [`rwm_step`] with `log π(x)` supplied; also returns `log π` at the
/// next state.
pub(crate) fn step_from(
    x: &Vector,
    log_px: f64,
    t: &dyn TargetDensity,
    cov: &SpdMatrix,
    rng: &mut RngStream,
) -> Result<(KernelStep, f64)> {
    check_dim(t.dim(), x.len())?;
    if !log_px.is_finite() {
        return Err(Error::InvalidState("π(x) = 0 at the current state".into()));
    }
    let u: f64 = rng.random();
    let proposal = sample_gaussian(x, cov, rng)?;
    let log_py = t.log_density(&proposal);
    let log_ratio = log_py - log_px;
    // Log-space comparison; `ln 0 = -∞` never accepts a zero-density proposal.
    let accepted = u.ln() < log_ratio;
    let (next_state, log_next) = if accepted {
        (proposal.clone(), log_py)
    } else {
        (x.clone(), log_px)
    };
    Ok((
        KernelStep {
            next_state,
            accepted,
            log_ratio,
            proposal,
        },
        log_next,
    ))
}

/// Uniform grid `lo, lo + h, …, hi` with `n` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 3 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("grid needs lo < hi and at least 3 points".into()));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + self.spacing() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point nearest to `x`, if `x` lies on the grid up to
    /// a relative tolerance of `1e-9` of the spacing.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = ((x - self.lo) / self.spacing()).round();
        if k < 0.0 || k >= self.n as f64 {
            return None;
        }
        let i = k as usize;
        ((self.point(i) - x).abs() <= 1e-9 * self.spacing()).then_some(i)
    }
}

/// The RWM kernel restricted to a 1-d grid: off-diagonal mass
/// `h·q_v(x_j − x_i)·min(1, π_j/π_i)`, with every proposal that leaves the
/// grid or is rejected folded into the diagonal. The chain is exactly
/// reversible with respect to the normalized grid weights of `π`.
#[derive(Clone, Debug)]
pub struct DiscretizedChain {
    grid: Grid,
    transition: DMatrix<f64>,
    target_weights: DVector<f64>,
    log_v: DVector<f64>,
}

impl DiscretizedChain {
    pub fn new(t: &dyn TargetDensity, v: &SpdMatrix, grid: Grid) -> Result<Self> {
        if t.dim() != 1 || v.dim() != 1 {
            return Err(Error::InvalidInput("discretized chain is one-dimensional".into()));
        }
        let h = grid.spacing();
        let pts: Vec<Vector> = grid.points().into_iter().map(|x| DVector::from_element(1, x)).collect();
        let log_pi: Vec<f64> = pts.iter().map(|x| t.log_density(x)).collect();
        if log_pi.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidState("π vanishes on the grid".into()));
        }
        let zero = DVector::zeros(1);
        let n = grid.n;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = log_gaussian_density(&(&pts[j] - &pts[i]), &zero, v)?.exp();
                let a = acceptance_probability(&pts[i], &pts[j], t)?;
                let pij = h * q * a;
                p[(i, j)] = pij;
                off += pij;
            }
            if off > 1.0 {
                return Err(Error::InvalidInput(format!(
                    "grid too coarse for the proposal: row {i} leaves mass {off}"
                )));
            }
            p[(i, i)] = 1.0 - off;
        }
        let max = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_pi.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let target_weights = DVector::from_iterator(n, w.into_iter().map(|x| x / total));
        let df = DriftFunction::new(t);
        let log_v = DVector::from_iterator(n, log_pi.iter().map(|l| df.log_v_from_log_density(*l)));
        Ok(DiscretizedChain {
            grid,
            transition: p,
            target_weights,
            log_v,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// Normalized `π` on the grid.
    pub fn target_weights(&self) -> &DVector<f64> {
        &self.target_weights
    }

    pub fn drift_values(&self) -> DVector<f64> {
        self.log_v.map(f64::exp)
    }

    /// Mass of `π` at the two grid endpoints.
    pub fn boundary_mass(&self) -> f64 {
        self.target_weights[0] + self.target_weights[self.grid.n - 1]
    }

    /// `max_{i,j} |π_i P_ij − π_j P_ji|`.
    pub fn reversibility_residual(&self) -> f64 {
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.target_weights[i] * self.transition[(i, j)];
                let b = self.target_weights[j] * self.transition[(j, i)];
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// `(P V)(x_i)` for every grid point.
    pub fn drift_image(&self) -> DVector<f64> {
        &self.transition * self.drift_values()
    }

    /// Checks `P V ≤ λ V + b 1_C` at every grid point with `C = [-R, R]`.
    pub fn satisfies_drift(&self, lambda: f64, b: f64, radius: f64) -> bool {
        let v = self.drift_values();
        let pv = self.drift_image();
        (0..self.grid.n).all(|i| {
            let in_c = self.grid.point(i).abs() <= radius;
            pv[i] <= lambda * v[i] + if in_c { b } else { 0.0 }
        })
    }

    /// Minorization constant on `C = [-R, R]` with `ν` uniform on the grid
    /// points of `C`: `δ = |C_grid| · min_{i,j ∈ C} P_ij`, clamped to 1.
    pub fn minorization(&self, radius: f64) -> Result<f64> {
        let idx: Vec<usize> = (0..self.grid.n)
            .filter(|&i| self.grid.point(i).abs() <= radius)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidInput("minorization set contains no grid points".into()));
        }
        let mut min = f64::INFINITY;
        for &i in &idx {
            for &j in &idx {
                min = min.min(self.transition[(i, j)]);
            }
        }
        Ok((min * idx.len() as f64).min(1.0))
    }

    /// Rows of `δ_{x0} P^k` for `k = 0..=k_max`.
    pub fn k_step_rows(&self, start: usize, k_max: usize) -> Vec<DVector<f64>> {
        let mut row = DVector::zeros(self.grid.n);
        row[start] = 1.0;
        let pt = self.transition.transpose();
        let mut out = Vec::with_capacity(k_max + 1);
        out.push(row.clone());
        for _ in 0..k_max {
            row = &pt * &row;
            out.push(row.clone());
        }
        out
    }

    /// `‖μ − π‖_V = Σ_i V_i |μ_i − π_i|`.
    pub fn v_distance(&self, mu: &DVector<f64>) -> f64 {
        let v = self.drift_values();
        (0..self.grid.n)
            .map(|i| v[i] * (mu[i] - self.target_weights[i]).abs())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::targets::Target;

    fn v1(x: f64) -> Vector {
        DVector::from_element(1, x)
    }

    #[test]
    fn acceptance_trivial_cases() {
        let t = Target::standard_gaussian(1);
        assert_eq!(acceptance_probability(&v1(1.0), &v1(0.5), &t).unwrap(), 1.0);
        assert_eq!(acceptance_probability(&v1(1.0), &v1(1.0), &t).unwrap(), 1.0);
        let a = acceptance_probability(&v1(0.0), &v1(2.0), &t).unwrap();
        assert!((a - (-2.0f64).exp()).abs() < 1e-15);
    }

    struct ZeroAt;
    impl TargetDensity for ZeroAt {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &Vector) -> f64 {
            if x[0] > 5.0 {
                f64::NEG_INFINITY
            } else {
                -0.5 * x[0] * x[0]
            }
        }
    }

    #[test]
    fn zero_density_state_is_invalid() {
        assert!(matches!(
            acceptance_probability(&v1(6.0), &v1(0.0), &ZeroAt),
            Err(Error::InvalidState(_))
        ));
        let cov = SpdMatrix::identity(1);
        assert!(rwm_step(&v1(6.0), &ZeroAt, &cov, &mut stream(0)).is_err());
    }

    #[test]
    fn step_is_deterministic_and_consistent() {
        let t = Target::standard_gaussian(2);
        let cov = SpdMatrix::scaled_identity(2, 2.0);
        let x = DVector::from_vec(vec![0.5, -1.0]);
        let mut r1 = stream(77);
        let mut r2 = stream(77);
        for _ in 0..100 {
            let a = rwm_step(&x, &t, &cov, &mut r1).unwrap();
            let b = rwm_step(&x, &t, &cov, &mut r2).unwrap();
            assert_eq!(a, b);
            if a.accepted {
                assert_eq!(a.next_state, a.proposal);
            } else {
                assert_eq!(a.next_state, x);
            }
        }
    }

    #[test]
    fn step_consumes_uniform_then_gaussian() {
        let t = Target::standard_gaussian(1);
        let cov = SpdMatrix::identity(1);
        let x = v1(0.3);
        let step = rwm_step(&x, &t, &cov, &mut stream(5)).unwrap();
        let mut rng = stream(5);
        let u: f64 = rng.random();
        let y = sample_gaussian(&x, &cov, &mut rng).unwrap();
        assert_eq!(step.proposal, y);
        assert_eq!(step.accepted, u.ln() < t.log_density(&y) - t.log_density(&x));
    }

    /// `π²`: the same target with doubled log-density.
    struct Squared<'a>(&'a dyn TargetDensity);
    impl TargetDensity for Squared<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn log_density(&self, x: &Vector) -> f64 {
            2.0 * self.0.log_density(x)
        }
    }

    #[test]
    fn sharper_target_never_accepts_more() {
        let t = Target::standard_gaussian(2);
        let sq = Squared(&t);
        let cov = SpdMatrix::identity(2);
        let mut rng = stream(31);
        let (mut acc_t, mut acc_sq) = (0usize, 0usize);
        for _ in 0..20_000 {
            // Same state, same uniform and same proposal for both targets.
            let x = sample_gaussian(&DVector::zeros(2), &cov, &mut rng).unwrap();
            let seed: u64 = rng.random();
            let a = rwm_step(&x, &t, &cov, &mut stream(seed)).unwrap();
            let b = rwm_step(&x, &sq, &cov, &mut stream(seed)).unwrap();
            assert_eq!(a.proposal, b.proposal);
            assert!(!b.accepted || a.accepted);
            acc_t += a.accepted as usize;
            acc_sq += b.accepted as usize;
        }
        assert!(acc_sq <= acc_t);
    }

    #[test]
    fn long_run_acceptance_matches_double_quadrature() {
        // Oracle: ∫∫ min(1, π(y)/π(x)) q(y − x) π(x) dy dx on a tensor grid.
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let n = 1201;
        let h = 24.0 / (n - 1) as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let x = -12.0 + h * i as f64;
            for j in 0..n {
                let y = -12.0 + h * j as f64;
                let a = (0.5 * (x * x - y * y)).exp().min(1.0);
                oracle += a * phi(y - x) * phi(x);
            }
        }
        oracle *= h * h;

        let t = Target::standard_gaussian(1);
        let cov = SpdMatrix::identity(1);
        let mut rng = stream(2024);
        let mut x = v1(0.0);
        let steps = 400_000;
        let mut acc = 0usize;
        for _ in 0..steps {
            let s = rwm_step(&x, &t, &cov, &mut rng).unwrap();
            acc += s.accepted as usize;
            x = s.next_state;
        }
        let rate = acc as f64 / steps as f64;
        assert!((rate - oracle).abs() < 0.01, "rate {rate} vs oracle {oracle}");
    }

    fn gaussian_chain() -> DiscretizedChain {
        let t = Target::standard_gaussian(1);
        DiscretizedChain::new(&t, &SpdMatrix::identity(1), Grid::new(-8.0, 8.0, 321).unwrap()).unwrap()
    }

    #[test]
    fn discretized_chain_is_stochastic_and_reversible() {
        let c = gaussian_chain();
        for i in 0..321 {
            let s: f64 = c.transition().row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(c.transition().row(i).iter().all(|p| *p >= 0.0));
        }
        assert!(c.reversibility_residual() < 1e-8);
        assert!(c.boundary_mass() < 1e-10);
    }

    #[test]
    fn discretized_stationary_vector_by_power_iteration() {
        let c = gaussian_chain();
        let pt = c.transition().transpose();
        let mut mu = DVector::from_element(321, 1.0 / 321.0);
        for _ in 0..5000 {
            let next = &pt * &mu;
            let delta = (&next - &mu).amax();
            mu = next;
            if delta < 1e-16 {
                break;
            }
        }
        assert!((mu - c.target_weights()).amax() < 1e-8);
    }

    #[test]
    fn grid_index_lookup() {
        let g = Grid::new(-8.0, 8.0, 321).unwrap();
        assert_eq!(g.index_of(0.0), Some(160));
        assert_eq!(g.index_of(3.0), Some(220));
        assert_eq!(g.index_of(3.01), None);
        assert_eq!(g.index_of(9.0), None);
    }
}
