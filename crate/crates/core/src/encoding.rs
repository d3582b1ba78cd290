//! Affine re-encoding of the search space, `x' = C^{-1/2} (x - m)`.
//!
//! The RBF surrogate is fit on encoded points so that the learned search
//! distribution looks isotropic to the kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest tolerated asymmetry `|C_ij - C_ji|` on input matrices.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalue floor relative to the mean eigenvalue `trace(C)/N`.
pub const EIGEN_FLOOR_REL: f64 = 1e-20;

/// Symmetric eigendecomposition `C = B diag(d^2) B^T` with eigenvalues
/// clamped from below to the eigen floor.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Orthonormal eigenvectors, one per column.
    pub basis: DMatrix<f64>,
    /// Square roots of the (floored) eigenvalues.
    pub scales: DVector<f64>,
    /// Whether any eigenvalue was raised to the floor.
    pub floored: bool,
}

impl Eigen {
    pub fn of(cov: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(cov)?;
        let n = cov.nrows();
        let sym = symmetrized(cov);
        let floor = eigen_floor(&sym);
        let eig = sym.symmetric_eigen();
        let mut floored = false;
        let scales = DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&ev| {
                if !(ev >= floor) {
                    floored = true;
                    floor.sqrt()
                } else {
                    ev.sqrt()
                }
            }),
        );
        Ok(Self {
            basis: eig.eigenvectors,
            scales,
            floored,
        })
    }

    /// `B diag(d^2) B^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.compose(|d| d * d)
    }

    /// `B diag(d) B^T`.
    pub fn sqrt(&self) -> DMatrix<f64> {
        self.compose(|d| d)
    }

    /// `B diag(1/d) B^T`.
    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.compose(|d| 1.0 / d)
    }

    /// `B diag(d)`, the factor that maps standard normal draws onto `N(0, C)`.
    pub fn sampling_factor(&self) -> DMatrix<f64> {
        let mut bd = self.basis.clone();
        for (j, mut col) in bd.column_iter_mut().enumerate() {
            col *= self.scales[j];
        }
        bd
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.scales
            .iter()
            .map(|d| d * d)
            .fold(f64::INFINITY, f64::min)
    }

    fn compose(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.scales.len();
        let mut scaled = self.basis.clone();
        for j in 0..n {
            let s = f(self.scales[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrized(&(scaled * self.basis.transpose()))
    }
}

/// `1e-20 * trace(C) / N`, never below the smallest positive normal.
pub fn eigen_floor(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows().max(1) as f64;
    (EIGEN_FLOOR_REL * cov.trace() / n).max(f64::MIN_POSITIVE)
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidMatrix(format!(
            "{}x{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "asymmetry {gap:e} at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Inverse square root of a symmetric positive (semi)definite matrix,
/// eigenvalues floored before inversion.
pub fn inv_sqrt_cov(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(Eigen::of(cov)?.inv_sqrt())
}

/// Frozen snapshot of the encoding map for one surrogate's lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTransform {
    pub mean: DVector<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub generation_stamp: usize,
}

impl EncodingTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            inv_sqrt: DMatrix::identity(dim, dim),
            generation_stamp: 0,
        }
    }

    pub fn from_covariance(
        mean: DVector<f64>,
        cov: &DMatrix<f64>,
        generation_stamp: usize,
    ) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(Self {
            mean,
            inv_sqrt: inv_sqrt_cov(cov)?,
            generation_stamp,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn encode(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok(&self.inv_sqrt * centered)
    }

    /// Inverse map; needs `C^{1/2}`, which the transform does not store.
    pub fn decode(&self, sqrt_cov: &DMatrix<f64>, encoded: &DVector<f64>) -> DVector<f64> {
        sqrt_cov * encoded + &self.mean
    }
}
