//! Surrogate quality control: rank-based model error, its exponential
//! smoothing, and the resulting surrogate lifespan.

use crate::error::{Error, Result};
use crate::surrogate::RbfModel;

pub const DEFAULT_TAU_ERR: f64 = 0.45;
pub const DEFAULT_BETA_ERR: f64 = 0.2;
pub const DEFAULT_N_HAT_MAX: usize = 20;
pub const INITIAL_ERR: f64 = 0.5;

/// Fraction of pairs ordered differently by `predicted` and `truth`.
///
/// A pair tied in exactly one of the two orderings counts as discordant; a
/// pair tied in both is concordant.
pub fn discordant_fraction(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    let n = truth.len();
    if predicted.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: predicted.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientTestPoints(n));
    }
    if let Some(&v) = truth.iter().chain(predicted).find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation {
            x: vec![],
            value: v,
        });
    }
    let mut discordant = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = predicted[i].partial_cmp(&predicted[j]);
            let b = truth[i].partial_cmp(&truth[j]);
            if a != b {
                discordant += 1;
            }
        }
    }
    Ok(2.0 * discordant as f64 / (n * (n - 1)) as f64)
}

/// Ranking error of `model` on `(x, true_y)` pairs.
pub fn ranking_error(model: &RbfModel, test_points: &[(Vec<f64>, f64)]) -> Result<f64> {
    if test_points.len() < 2 {
        return Err(Error::InsufficientTestPoints(test_points.len()));
    }
    let predicted = test_points
        .iter()
        .map(|(x, _)| model.predict(x))
        .collect::<Result<Vec<f64>>>()?;
    let truth: Vec<f64> = test_points.iter().map(|(_, y)| *y).collect();
    discordant_fraction(&predicted, &truth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateController {
    pub err_smoothed: f64,
    pub tau_err: f64,
    pub beta_err: f64,
    pub n_hat: usize,
    pub n_hat_max: usize,
}

impl Default for SurrogateController {
    fn default() -> Self {
        Self::new(DEFAULT_TAU_ERR, DEFAULT_BETA_ERR, DEFAULT_N_HAT_MAX)
    }
}

impl SurrogateController {
    /// Starts with smoothed error 0.5 and lifespan 0.
    pub fn new(tau_err: f64, beta_err: f64, n_hat_max: usize) -> Self {
        Self {
            err_smoothed: INITIAL_ERR,
            tau_err,
            beta_err,
            n_hat: 0,
            n_hat_max,
        }
    }

    pub fn update_error(&mut self, err_new: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&err_new) {
            return Err(Error::Domain(err_new));
        }
        let e = (1.0 - self.beta_err) * self.err_smoothed + self.beta_err * err_new;
        self.err_smoothed = e.clamp(0.0, 1.0);
        Ok(self.err_smoothed)
    }

    /// `floor((tau - E) / tau * n_hat_max)` on the smoothed error `E`,
    /// clamped to `[0, n_hat_max]`.
    pub fn compute_lifespan(&mut self) -> usize {
        let raw =
            ((self.tau_err - self.err_smoothed) / self.tau_err * self.n_hat_max as f64).floor();
        self.n_hat = if raw.is_nan() || raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.n_hat_max)
        };
        self.n_hat
    }
}
