use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DiscretizedChain, Grid};
use crate::linalg::SpdMatrix;
use crate::targets::TargetDensity;

/// Largest `π` mass allowed at the grid endpoints.
pub const MAX_BOUNDARY_MASS: f64 = 1e-10;

fn covered_chain(t: &dyn TargetDensity, v: &SpdMatrix, grid: Grid) -> Result<DiscretizedChain> {
    let chain = DiscretizedChain::new(t, v, grid)?;
    let mass = chain.boundary_mass();
    if mass > MAX_BOUNDARY_MASS {
        return Err(Error::GridCoverage(mass));
    }
    Ok(chain)
}

fn start_index(grid: &Grid, x0: f64) -> Result<usize> {
    grid.index_of(x0)
        .ok_or_else(|| Error::InvalidInput(format!("x0 = {x0} is not a grid point")))
}

/// `‖δ_{x0} P^k − π‖_V` for the RWM kernel discretized on `grid`.
pub fn vnorm_distance_discretized(t: &dyn TargetDensity, v: &SpdMatrix, x0: f64, k: usize, grid: Grid) -> Result<f64> {
    Ok(vnorm_distance_sweep(t, v, x0, k, grid)?[k])
}

/// `‖δ_{x0} P^k − π‖_V` for every `k = 0..=k_max`, building the transition
/// matrix once.
pub fn vnorm_distance_sweep(
    t: &dyn TargetDensity,
    v: &SpdMatrix,
    x0: f64,
    k_max: usize,
    grid: Grid,
) -> Result<Vec<f64>> {
    let start = start_index(&grid, x0)?;
    let chain = covered_chain(t, v, grid)?;
    Ok(chain
        .k_step_rows(start, k_max)
        .iter()
        .map(|row| chain.v_distance(row))
        .collect())
}

/// Drift and minorization constants of a discretized chain, checked at
/// every grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCertificate {
    pub lambda: f64,
    pub b: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    /// `max P V/V` over grid points outside `C`.
    pub max_outer_ratio: f64,
}

/// Smallest radius in `radii` for which `P V ≤ (1 − margin) V` at every
/// grid point outside `C = [−R, R]`; `b` is the exact grid supremum of
/// `max(V, P V)` on `C` and `δ` the discrete minorization constant.
pub fn fit_discretized_certificate(
    chain: &DiscretizedChain,
    radii: &[f64],
    margin: f64,
) -> Result<DiscreteCertificate> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidInput(format!("margin must lie in (0, 1), got {margin}")));
    }
    let lambda = 1.0 - margin;
    let v = chain.drift_values();
    let pv = chain.drift_image();
    let grid = chain.grid();
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    for radius in sorted {
        let inside = |i: usize| grid.point(i).abs() <= radius;
        let max_outer_ratio = (0..grid.n)
            .filter(|&i| !inside(i))
            .map(|i| pv[i] / v[i])
            .fold(0.0, f64::max);
        if max_outer_ratio > lambda {
            continue;
        }
        let b = (0..grid.n)
            .filter(|&i| inside(i))
            .map(|i| v[i].max(pv[i]))
            .fold(0.0, f64::max);
        if b <= 0.0 || !chain.satisfies_drift(lambda, b, radius) {
            continue;
        }
        let delta = chain.minorization(radius)?;
        if delta <= 0.0 {
            continue;
        }
        return Ok(DiscreteCertificate {
            lambda,
            b,
            radius,
            delta,
            max_outer_ratio,
        });
    }
    Err(Error::NoDriftFound(
        "no radius satisfies the grid drift inequality".into(),
    ))
}
