//! Radial basis function interpolation with a linear polynomial tail.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingTransform;
use crate::error::{Error, Result};

/// Condition number above which the interpolation system is regularized.
pub const COND_LIMIT: f64 = 1e12;

/// Tikhonov shift relative to the mean absolute kernel matrix entry.
pub const REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbfKernel {
    /// `r^3`
    Cubic,
    /// `r^2 ln r`
    ThinPlateSpline,
    /// `r`
    Linear,
}

impl RbfKernel {
    pub const ALL: [RbfKernel; 3] = [
        RbfKernel::Cubic,
        RbfKernel::ThinPlateSpline,
        RbfKernel::Linear,
    ];

    pub fn phi(self, r: f64) -> f64 {
        match self {
            RbfKernel::Cubic => r * r * r,
            RbfKernel::Linear => r,
            RbfKernel::ThinPlateSpline => {
                if r > 0.0 {
                    r * r * r.ln()
                } else {
                    0.0
                }
            }
        }
    }

    /// `phi'(r) / r`, the radial factor of the gradient. `None` where the
    /// kernel is not differentiable (linear kernel at `r = 0`).
    pub fn dphi_over_r(self, r: f64) -> Option<f64> {
        match self {
            RbfKernel::Cubic => Some(3.0 * r),
            RbfKernel::Linear => (r > 0.0).then(|| 1.0 / r),
            // 2 ln r + 1 diverges at 0, but multiplied by (x - c) the term vanishes.
            RbfKernel::ThinPlateSpline => Some(if r > 0.0 { 2.0 * r.ln() + 1.0 } else { 0.0 }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RbfKernel::Cubic => "cubic",
            RbfKernel::ThinPlateSpline => "tps",
            RbfKernel::Linear => "linear",
        }
    }
}

impl fmt::Display for RbfKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RbfKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" => Ok(RbfKernel::Cubic),
            "tps" | "thin_plate_spline" | "thin-plate-spline" => Ok(RbfKernel::ThinPlateSpline),
            "linear" => Ok(RbfKernel::Linear),
            _ => Err(Error::UnknownKernel(s.to_string())),
        }
    }
}

/// How the interpolation system was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// Exact interpolation with the linear tail.
    Interpolation,
    /// Ill-conditioned or singular system, solved with a diagonal shift.
    Regularized,
    /// Affinely degenerate points: no polynomial tail.
    TailFree,
}

/// Fitted interpolant `sum_i w_i phi(|x' - c_i|) + c_0 + c^T x'` on encoded
/// coordinates `x'`.
#[derive(Debug, Clone)]
pub struct RbfModel {
    pub kernel: RbfKernel,
    /// One center per column, in encoded coordinates.
    pub centers: DMatrix<f64>,
    pub rbf_weights: DVector<f64>,
    /// `[c_0, c_1, .., c_N]`.
    pub poly_coeffs: DVector<f64>,
    pub transform: EncodingTransform,
    pub fit_kind: FitKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub grad: DVector<f64>,
    /// False when a non-differentiable kernel term was dropped.
    pub exact: bool,
}

// Four independent partial sums let the compiler vectorise the loop.
fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for k in 0..4 {
            let d = ca[k] - cb[k];
            acc[k] += d * d;
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (u, v) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        total += (u - v) * (u - v);
    }
    total.sqrt()
}

/// Fit on already encoded points; the returned model carries an identity
/// transform.
pub fn fit_rbf(points: &[DVector<f64>], values: &[f64], kernel: RbfKernel) -> Result<RbfModel> {
    let k = points.len();
    let dim = points.first().map_or(0, |p| p.len());
    if values.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: values.len(),
        });
    }
    if k < dim + 2 || dim == 0 {
        return Err(Error::InsufficientPoints {
            got: k,
            required: dim + 2,
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput(vec![]));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation {
            x: vec![],
            value: v,
        });
    }

    let centers = DMatrix::from_fn(dim, k, |j, i| points[i][j]);
    let mut phi = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let r = distance(points[i].as_slice(), points[j].as_slice());
            let v = kernel.phi(r);
            phi[(i, j)] = v;
            phi[(j, i)] = v;
        }
    }
    let mut poly = DMatrix::zeros(k, dim + 1);
    for i in 0..k {
        poly[(i, 0)] = 1.0;
        for j in 0..dim {
            poly[(i, j + 1)] = points[i][j];
        }
    }
    let with_tail = poly.rank(1e-10 * poly.norm().max(1.0)) == dim + 1;
    let m = if with_tail { dim + 1 } else { 0 };

    let size = k + m;
    let mut system = DMatrix::zeros(size, size);
    system.view_mut((0, 0), (k, k)).copy_from(&phi);
    if with_tail {
        system.view_mut((0, k), (k, m)).copy_from(&poly);
        system.view_mut((k, 0), (m, k)).copy_from(&poly.transpose());
    }
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(0, k).copy_from_slice(values);

    let mut fit_kind = if with_tail {
        FitKind::Interpolation
    } else {
        FitKind::TailFree
    };
    let solution = match solve_checked(&system, &rhs) {
        Some(sol) => sol,
        None => {
            let scale = phi.iter().map(|v| v.abs()).sum::<f64>() / (k * k) as f64;
            let shift = REGULARIZATION * if scale > 0.0 { scale } else { 1.0 };
            for i in 0..k {
                system[(i, i)] += shift;
            }
            if with_tail {
                fit_kind = FitKind::Regularized;
            }
            system
                .lu()
                .solve(&rhs)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::InvalidMatrix("regularized RBF system is singular".into()))?
        }
    };

    let rbf_weights = solution.rows(0, k).into_owned();
    let poly_coeffs = if with_tail {
        solution.rows(k, m).into_owned()
    } else {
        DVector::zeros(dim + 1)
    };
    Ok(RbfModel {
        kernel,
        centers,
        rbf_weights,
        poly_coeffs,
        transform: EncodingTransform::identity(dim),
        fit_kind,
    })
}

/// LU solve, rejected when singular or when the 1-norm condition estimate
/// exceeds [`COND_LIMIT`].
fn solve_checked(system: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = system.clone().lu();
    let sol = lu.solve(rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let norm1 = system
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let inv_norm = estimate_inverse_norm1(system.nrows(), |b| lu.solve(b))?;
    if !(norm1 * inv_norm <= COND_LIMIT) {
        return None;
    }
    Some(sol)
}

/// Hager's estimator of `||A^{-1}||_1` for a symmetric `A`, given a solver.
fn estimate_inverse_norm1(
    n: usize,
    solve: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        if !est.is_finite() {
            return None;
        }
        let signs = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve(&signs)?;
        let (j, zmax) =
            z.iter()
                .map(|v| v.abs())
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                );
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    Some(est)
}

impl RbfModel {
    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn train_size(&self) -> usize {
        self.centers.ncols()
    }

    pub fn with_transform(mut self, transform: EncodingTransform) -> Self {
        self.transform = transform;
        self
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(x.to_vec()));
        }
        Ok(())
    }

    /// Prediction at a raw-space point.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let encoded = self.transform.encode(x)?;
        Ok(self.predict_encoded(encoded.as_slice()))
    }

    /// Prediction at an already encoded point.
    pub fn predict_encoded(&self, xe: &[f64]) -> f64 {
        let mut total = self.poly_coeffs[0];
        for (j, v) in xe.iter().enumerate() {
            total += self.poly_coeffs[j + 1] * v;
        }
        for (i, w) in self.rbf_weights.iter().enumerate() {
            let r = distance(xe, self.centers.column(i).as_slice());
            total += w * self.kernel.phi(r);
        }
        total
    }

    /// Gradient with respect to raw coordinates, chained through the encoding.
    pub fn predict_gradient(&self, x: &[f64]) -> Result<Gradient> {
        self.check_input(x)?;
        let xe = self.transform.encode(x)?;
        let dim = self.dim();
        let mut g = self.poly_coeffs.rows(1, dim).into_owned();
        let mut exact = true;
        for (i, w) in self.rbf_weights.iter().enumerate() {
            let center = self.centers.column(i);
            let r = distance(xe.as_slice(), center.as_slice());
            match self.kernel.dphi_over_r(r) {
                Some(f) => {
                    for j in 0..dim {
                        g[j] += w * f * (xe[j] - center[j]);
                    }
                }
                None => exact = false,
            }
        }
        Ok(Gradient {
            grad: self.transform.inv_sqrt.transpose() * g,
            exact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts1(vals: &[f64]) -> Vec<DVector<f64>> {
        vals.iter().map(|&v| dvector![v]).collect()
    }

    #[test]
    fn kernels_vanish_at_zero() {
        for k in RbfKernel::ALL {
            assert_eq!(k.phi(0.0), 0.0);
        }
        assert!(RbfKernel::ThinPlateSpline.phi(0.5) < 0.0);
    }

    #[test]
    fn kernel_names_parse() {
        for k in RbfKernel::ALL {
            assert_eq!(k.name().parse::<RbfKernel>().unwrap(), k);
        }
        assert!(matches!(
            "gaussian".parse::<RbfKernel>(),
            Err(Error::UnknownKernel(_))
        ));
    }

    #[test]
    fn cubic_1d_interpolates_nodes() {
        let m = fit_rbf(&pts1(&[-1.0, 0.0, 1.0]), &[1.0, 0.0, 1.0], RbfKernel::Cubic).unwrap();
        assert_eq!(m.fit_kind, FitKind::Interpolation);
        for (x, y) in [(-1.0, 1.0), (0.0, 0.0), (1.0, 1.0)] {
            assert!((m.predict(&[x]).unwrap() - y).abs() < 1e-8);
        }
        let g = m.predict_gradient(&[0.0]).unwrap();
        assert!(g.exact);
        assert!(g.grad[0].abs() < 1e-12);
    }

    #[test]
    fn cubic_1d_matches_dense_oracle_at_midpoint() {
        // Hand-assembled 5x5 saddle system for nodes -1, 0, 1.
        let nodes = [-1.0f64, 0.0, 1.0];
        let a = DMatrix::from_fn(5, 5, |i, j| match (i < 3, j < 3) {
            (true, true) => (nodes[i] - nodes[j]).abs().powi(3),
            (true, false) => {
                if j == 3 {
                    1.0
                } else {
                    nodes[i]
                }
            }
            (false, true) => {
                if i == 3 {
                    1.0
                } else {
                    nodes[j]
                }
            }
            (false, false) => 0.0,
        });
        let b = dvector![1.0, 0.0, 1.0, 0.0, 0.0];
        let s = a.full_piv_lu().solve(&b).unwrap();
        let at = 0.5f64;
        let expected: f64 = (0..3)
            .map(|i| s[i] * (at - nodes[i]).abs().powi(3))
            .sum::<f64>()
            + s[3]
            + s[4] * at;
        let m = fit_rbf(&pts1(&nodes), &[1.0, 0.0, 1.0], RbfKernel::Cubic).unwrap();
        assert!((m.predict(&[at]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn linear_target_absorbed_by_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 3;
        for kernel in RbfKernel::ALL {
            let pts: Vec<DVector<f64>> = (0..dim + 5)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
                .collect();
            let vals: Vec<f64> = pts.iter().map(|p| 2.0 * p[0] + 1.0).collect();
            let m = fit_rbf(&pts, &vals, kernel).unwrap();
            assert!(m.rbf_weights.amax() < 1e-8, "{kernel}");
            for _ in 0..100 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                assert!((m.predict(&x).unwrap() - (2.0 * x[0] + 1.0)).abs() < 1e-6);
                if kernel != RbfKernel::Linear {
                    let g = m.predict_gradient(&x).unwrap();
                    assert!((g.grad.clone() - dvector![2.0, 0.0, 0.0]).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn coincident_points_fall_back_to_regularization() {
        let pts = pts1(&[-1.0, 0.0, 0.0, 1.0]);
        let m = fit_rbf(&pts, &[1.0, 0.0, 0.0, 1.0], RbfKernel::Cubic).unwrap();
        assert_eq!(m.fit_kind, FitKind::Regularized);
        assert!(m.predict(&[0.5]).unwrap().is_finite());
    }

    #[test]
    fn affinely_degenerate_points_drop_the_tail() {
        let pts: Vec<DVector<f64>> = (0..6).map(|i| dvector![i as f64, 2.0 * i as f64]).collect();
        let vals: Vec<f64> = (0..6).map(|i| (i * i) as f64).collect();
        let m = fit_rbf(&pts, &vals, RbfKernel::Cubic).unwrap();
        assert_eq!(m.fit_kind, FitKind::TailFree);
        assert!(m.predict(&[2.0, 4.0]).unwrap().is_finite());
    }

    #[test]
    fn too_few_points() {
        let pts = vec![dvector![0.0, 0.0], dvector![1.0, 0.0], dvector![0.0, 1.0]];
        assert!(matches!(
            fit_rbf(&pts, &[0.0, 1.0, 1.0], RbfKernel::Cubic),
            Err(Error::InsufficientPoints {
                got: 3,
                required: 4
            })
        ));
    }

    #[test]
    fn linear_kernel_gradient_at_center_is_flagged() {
        let pts = pts1(&[-1.0, 0.0, 1.0, 2.0]);
        let m = fit_rbf(&pts, &[1.0, 0.0, 1.0, 4.0], RbfKernel::Linear).unwrap();
        assert!(!m.predict_gradient(&[0.0]).unwrap().exact);
        assert!(m.predict_gradient(&[0.5]).unwrap().exact);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let m = fit_rbf(&pts1(&[-1.0, 0.0, 1.0]), &[1.0, 0.0, 1.0], RbfKernel::Cubic).unwrap();
        assert!(matches!(
            m.predict(&[f64::NAN]),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            m.predict(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
