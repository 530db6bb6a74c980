//! Dense symmetric linear algebra and Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

pub type Vector = DVector<f64>;

const SYMMETRY_TOL: f64 = 1e-12;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric positive-definite matrix with its Cholesky factor and a lower
/// bound on its smallest eigenvalue.
///
/// The floor comes either from an eigen-decomposition (shifted by the
/// backward-error bound of the solver) or, for matrices produced by the AM
/// recursion, from the structure of the update itself.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
    certified_floor: f64,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.certified_floor == other.certified_floor
    }
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let m = validated_symmetric(m)?;
        let chol = cholesky(&m)?;
        let floor = eigen_floor(&m);
        Ok(SpdMatrix {
            entries: m,
            chol,
            certified_floor: floor,
        })
    }

    /// Builds a matrix whose eigenvalue floor is known from how it was
    /// constructed (exact up to floating-point rounding of the update).
    pub(crate) fn with_structural_floor(m: DMatrix<f64>, floor: f64) -> Result<Self> {
        let m = symmetrize(m);
        let chol = cholesky(&m)?;
        Ok(SpdMatrix {
            entries: m,
            chol,
            certified_floor: floor.max(0.0),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        for r in rows {
            check_dim(d, r.len())?;
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        assert!(d >= 1 && s > 0.0 && s.is_finite());
        let entries = DMatrix::identity(d, d) * s;
        let chol = DMatrix::identity(d, d) * s.sqrt();
        SpdMatrix {
            entries,
            chol,
            certified_floor: s,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular `L` with `L Lᵀ = self`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn certified_floor(&self) -> f64 {
        self.certified_floor
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigenvalues().max()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite());
        SpdMatrix {
            entries: &self.entries * s,
            chol: &self.chol * s.sqrt(),
            certified_floor: self.certified_floor * s,
        }
    }

    /// `vᵀ M⁻¹ v`, via a triangular solve against the Cholesky factor.
    pub fn inv_quad_form(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    /// `M⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = self
            .chol
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        self.chol
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SpdMatrixRepr {
    entries: Vec<Vec<f64>>,
    certified_floor: f64,
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpdMatrixRepr {
            entries: self.to_rows(),
            certified_floor: self.certified_floor,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SpdMatrixRepr::deserialize(d)?;
        let mut m = SpdMatrix::from_rows(&repr.entries).map_err(serde::de::Error::custom)?;
        // A stored structural floor is kept as long as it is consistent with
        // the spectrum.
        if repr.certified_floor <= m.min_eigenvalue() * (1.0 + 1e-12) + 1e-300 {
            m.certified_floor = repr.certified_floor.max(0.0);
        }
        Ok(m)
    }
}

/// Serializes a [`Vector`] as a plain list of numbers.
pub(crate) mod vector_serde {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn validated_symmetric(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let asym = (&m - m.transpose()).norm() / scale;
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(symmetrize(m))
}

/// Smallest computed eigenvalue minus the symmetric-eigensolver backward
/// error bound `c·d·u·‖M‖_F`, clamped at zero.
fn eigen_floor(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows() as f64;
    let tol = 8.0 * d * f64::EPSILON * m.norm();
    (m.clone().symmetric_eigenvalues().min() - tol).max(0.0)
}

/// Cholesky factor of a symmetric matrix; the input is symmetrized first.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let sym = symmetrize(m.clone());
    match sym.cholesky() {
        Some(c) => {
            let l = c.unpack();
            if l.diagonal().iter().all(|p| *p > 0.0 && p.is_finite()) {
                Ok(l)
            } else {
                Err(Error::NotPositiveDefinite)
            }
        }
        None => Err(Error::NotPositiveDefinite),
    }
}

/// Draws `mean + L z` with `z` standard normal.
pub fn sample_gaussian(mean: &Vector, cov: &SpdMatrix, rng: &mut RngStream) -> Result<Vector> {
    check_dim(cov.dim(), mean.len())?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + cov.cholesky_factor() * z)
}

pub fn log_gaussian_density(x: &Vector, mean: &Vector, cov: &SpdMatrix) -> Result<f64> {
    check_dim(cov.dim(), x.len())?;
    check_dim(cov.dim(), mean.len())?;
    let d = x.len() as f64;
    let r = x - mean;
    Ok(-0.5 * d * LN_2PI - 0.5 * cov.log_det() - 0.5 * cov.inv_quad_form(&r))
}
