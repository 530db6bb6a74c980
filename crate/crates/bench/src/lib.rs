//! Shared fixtures for the benchmarks.

use amcert_core::adapt::AdaptationState;
use amcert_core::{SpdMatrix, Target, Vector};
use nalgebra::DVector;

/// Standard Gaussian in `d` dimensions with an identity proposal.
pub fn gaussian_fixture(d: usize) -> (Target, SpdMatrix, Vector) {
    (
        Target::standard_gaussian(d),
        SpdMatrix::identity(d),
        DVector::from_element(d, 0.5),
    )
}

pub fn adaptation_fixture(d: usize) -> (AdaptationState, Vector) {
    let state = AdaptationState::new(DVector::zeros(d), SpdMatrix::identity(d), 100).expect("identity is SPD");
    (state, DVector::from_fn(d, |i, _| 0.1 * i as f64 - 0.3))
}
