//! Bounded minimization of the surrogate around the CMA mean.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::surrogate::RbfModel;

/// Side length of the trust box relative to the narrowest training extent.
pub const XI_FRACTION: f64 = 0.1;
pub const RANDOM_STARTS: usize = 4;
pub const ARMIJO_C: f64 = 1e-4;
pub const PG_TOL: f64 = 1e-8;
pub const STEP_TOL_REL: f64 = 1e-10;

/// Cube of side `xi` centered on the CMA mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub xi: f64,
}

impl TrustBox {
    pub fn centered(center: &[f64], xi: f64) -> Self {
        Self {
            lower: center.iter().map(|c| c - xi / 2.0).collect(),
            upper: center.iter().map(|c| c + xi / 2.0).collect(),
            xi,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Trust box with side `0.1 * min_i (b_i - a_i)`, where `[a_i, b_i]` is the
/// extent of the training points on axis `i`.
pub fn trust_box(training_points: &[Vec<f64>], x_mean: &[f64]) -> Result<TrustBox> {
    let dim = x_mean.len();
    if training_points.len() < 2 {
        return Err(Error::InsufficientPoints {
            got: training_points.len(),
            required: 2,
        });
    }
    let mut min_width = f64::INFINITY;
    let mut narrowest = 0;
    for axis in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in training_points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            lo = lo.min(p[axis]);
            hi = hi.max(p[axis]);
        }
        if hi - lo < min_width {
            min_width = hi - lo;
            narrowest = axis;
        }
    }
    let xi = XI_FRACTION * min_width;
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::DegenerateBox(narrowest));
    }
    Ok(TrustBox::centered(x_mean, xi))
}

struct Budgeted<'a> {
    model: &'a RbfModel,
    left: usize,
}

impl Budgeted<'_> {
    fn value(&mut self, x: &DVector<f64>) -> Option<f64> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        self.model.predict(x.as_slice()).ok()
    }

    fn gradient(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        self.model
            .predict_gradient(x.as_slice())
            .ok()
            .map(|g| g.grad)
    }
}

/// Projected gradient descent with Armijo backtracking from one start.
/// Returns the final iterate and its value.
fn descend(
    eval: &mut Budgeted<'_>,
    tbox: &TrustBox,
    start: DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let mut x = start;
    let mut fx = eval.value(&x)?;
    let step_tol = STEP_TOL_REL * tbox.xi;
    let mut t = f64::NAN;
    while let Some(g) = eval.gradient(&x) {
        let mut probe = &x - &g;
        tbox.project(&mut probe);
        if (&probe - &x).norm() < PG_TOL {
            break;
        }
        let gnorm = g.norm();
        if !t.is_finite() {
            t = tbox.xi / gnorm;
        }
        let mut accepted = None;
        loop {
            let mut cand = &x - &g * t;
            tbox.project(&mut cand);
            let step = &cand - &x;
            if step.norm() < step_tol {
                break;
            }
            let Some(fc) = eval.value(&cand) else { break };
            if fc <= fx + ARMIJO_C * g.dot(&step) {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                x = cand;
                fx = fc;
                t *= 2.0;
            }
            None => break,
        }
    }
    Some((x, fx))
}

/// Best surrogate point in `tbox` from multi-start projected gradient
/// descent. Starts are `x_mean` plus four uniform points in the box; the
/// budget of surrogate evaluations is split evenly among them.
pub fn find_surrogate_minimum<R: Rng + ?Sized>(
    model: &RbfModel,
    tbox: &TrustBox,
    x_mean: &[f64],
    budget: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let starts = RANDOM_STARTS + 1;
    if budget < starts {
        return Err(Error::InvalidBudget { budget, starts });
    }
    let dim = model.dim();
    if tbox.dim() != dim || x_mean.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: tbox.dim().min(x_mean.len()),
        });
    }
    let f_mean = model.predict(x_mean)?;
    let mut initial = vec![DVector::from_column_slice(x_mean)];
    for _ in 0..RANDOM_STARTS {
        initial.push(DVector::from_iterator(
            dim,
            (0..dim).map(|i| rng.random_range(tbox.lower[i]..=tbox.upper[i])),
        ));
    }
    let per_start = budget / starts;
    let mut best = (DVector::from_column_slice(x_mean), f_mean);
    for start in initial {
        let mut eval = Budgeted {
            model,
            left: per_start,
        };
        if let Some((x, fx)) = descend(&mut eval, tbox, start) {
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    Ok(best.0.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{fit_rbf, RbfKernel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_from_symmetric_spread() {
        let pts = vec![vec![-2.0, -2.0], vec![2.0, 2.0], vec![0.0, 1.0]];
        let b = trust_box(&pts, &[0.0, 0.0]).unwrap();
        assert!((b.xi - 0.4).abs() < 1e-15);
        assert_eq!(b.lower, vec![-0.2, -0.2]);
        assert_eq!(b.upper, vec![0.2, 0.2]);
    }

    #[test]
    fn narrow_axis_governs() {
        let pts = vec![vec![-2.0, 0.0], vec![2.0, 1.0]];
        let b = trust_box(&pts, &[0.0, 0.0]).unwrap();
        assert!((b.xi - 0.1).abs() < 1e-15);
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let pts = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(
            trust_box(&pts, &[1.0, 1.0]),
            Err(Error::DegenerateBox(_))
        ));
    }

    fn linear_model(g: &[f64]) -> RbfModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = g.len();
        let pts: Vec<DVector<f64>> = (0..dim + 6)
            .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let vals: Vec<f64> = pts
            .iter()
            .map(|p| p.iter().zip(g).map(|(a, b)| a * b).sum())
            .collect();
        fit_rbf(&pts, &vals, RbfKernel::Cubic).unwrap()
    }

    #[test]
    fn linear_surrogate_goes_to_corner() {
        let g = [1.0, -2.0, 0.5];
        let m = linear_model(&g);
        let b = TrustBox::centered(&[0.0; 3], 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = find_surrogate_minimum(&m, &b, &[0.0; 3], 300, &mut rng).unwrap();
        for (xi, gi) in x.iter().zip(g) {
            assert!((xi + 0.2 * gi.signum()).abs() < 1e-9, "{x:?}");
        }
    }

    #[test]
    fn quadratic_interior_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<DVector<f64>> = (0..40)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let vals: Vec<f64> = pts.iter().map(|p| p.norm_squared()).collect();
        let m = fit_rbf(&pts, &vals, RbfKernel::Cubic).unwrap();
        let b = TrustBox::centered(&[0.05, -0.05], 0.4);
        let x = find_surrogate_minimum(&m, &b, &[0.05, -0.05], 400, &mut rng).unwrap();
        assert!(b.contains(&x));
        // The model's own minimizer, not exactly 0, but close for 40 nodes.
        assert!(x.iter().all(|v| v.abs() < 0.05), "{x:?}");
        assert!(m.predict(&x).unwrap() <= m.predict(&[0.05, -0.05]).unwrap());
    }

    #[test]
    fn budget_below_starts_rejected() {
        let m = linear_model(&[1.0, 1.0]);
        let b = TrustBox::centered(&[0.0; 2], 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            find_surrogate_minimum(&m, &b, &[0.0; 2], 4, &mut rng),
            Err(Error::InvalidBudget {
                budget: 4,
                starts: 5
            })
        ));
    }
}
