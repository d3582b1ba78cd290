//! Archive of true evaluations and the RBF surrogate built from it.

mod archive;
mod rbf;

pub use archive::{select_training_set, training_set_size, Archive, ArchiveEntry, DEDUP_TOL};
pub use rbf::{fit_rbf, FitKind, Gradient, RbfKernel, RbfModel, COND_LIMIT, REGULARIZATION};

use nalgebra::DVector;

use crate::cma::CmaState;
use crate::encoding::EncodingTransform;
use crate::error::{Error, Result};
use crate::objective::{Objective, ObjectiveKind};

/// Fit a surrogate on the newest archive points, encoded with the state's
/// current mean and `C^{-1/2}`.
pub fn build_surrogate(
    archive: &Archive,
    state: &mut CmaState,
    kernel: RbfKernel,
) -> Result<RbfModel> {
    let dim = state.dim();
    if archive.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: archive.dim(),
        });
    }
    let training = select_training_set(archive, dim)?;
    if training.len() < dim + 2 {
        return Err(Error::InsufficientPoints {
            got: training.len(),
            required: dim + 2,
        });
    }
    let transform = EncodingTransform {
        mean: state.mean.clone(),
        inv_sqrt: state.inv_sqrt(),
        generation_stamp: state.generation,
    };
    fit_with_transform(&training, transform, kernel)
}

/// Encode `training` with `transform` and fit.
pub fn fit_with_transform(
    training: &[(Vec<f64>, f64)],
    transform: EncodingTransform,
    kernel: RbfKernel,
) -> Result<RbfModel> {
    let encoded = training
        .iter()
        .map(|(x, _)| transform.encode(x))
        .collect::<Result<Vec<DVector<f64>>>>()?;
    let values: Vec<f64> = training.iter().map(|(_, y)| *y).collect();
    Ok(fit_rbf(&encoded, &values, kernel)?.with_transform(transform))
}

/// A fitted model used in place of the true objective.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateObjective<'a>(pub &'a RbfModel);

impl Objective for SurrogateObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> f64 {
        self.0.predict(x).unwrap_or(f64::NAN)
    }

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::Surrogate
    }
}
