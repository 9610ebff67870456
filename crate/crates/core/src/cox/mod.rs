//! l1-penalized Cox proportional hazards over clinical covariates, FPC scores and
//! frontal interactions.

mod cv;
mod design;
mod likelihood;
mod solver;

pub use cv::{cv_lambda, stratified_folds, CvOptions, CvResult};
pub use design::{build_design, ColumnRole, DesignMatrix, DesignOptions, ScoreMatrix, Survival, SurvivalRecord};
pub use likelihood::{neg_log_partial_likelihood, LogLik, PartialLikelihood};
pub use solver::{fit_penalized_cox, lambda_path, CoxFit, CoxProblem, SolverOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::FpcaModel;

/// Coefficient functions of one homology dimension on its FPCA grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCoefficient {
    pub dim: usize,
    /// Effect for non-frontal subjects.
    pub main: Vec<f64>,
    /// Additional effect for frontal subjects; total frontal effect is `main + frontal`.
    pub frontal: Vec<f64>,
}

/// Expand fitted score coefficients through the eigenfunctions of each model.
pub fn functional_coefficients(
    fit: &CoxFit,
    roles: &[ColumnRole],
    models: &[FpcaModel],
) -> Result<Vec<FunctionalCoefficient>> {
    if roles.len() != fit.coefficients.len() {
        return Err(Error::invalid("column roles do not match the fitted coefficients"));
    }
    models
        .iter()
        .map(|m| {
            let mut main = vec![0.0; m.rank];
            let mut inter = vec![0.0; m.rank];
            let mut seen = 0;
            for (role, &b) in roles.iter().zip(&fit.coefficients) {
                let (slot, k) = match *role {
                    ColumnRole::Score { dim, k } if dim == m.dim => (&mut main, k),
                    ColumnRole::Interaction { dim, k } if dim == m.dim => (&mut inter, k),
                    _ => continue,
                };
                if k >= m.rank {
                    return Err(Error::invalid(format!(
                        "fit has component {} for dimension {} but the model has rank {}",
                        k + 1,
                        m.dim,
                        m.rank
                    )));
                }
                slot[k] = b;
                if matches!(role, ColumnRole::Score { .. }) {
                    seen += 1;
                }
            }
            if seen != m.rank {
                return Err(Error::invalid(format!(
                    "fit has {seen} score columns for dimension {} but the model has rank {}",
                    m.dim, m.rank
                )));
            }
            Ok(FunctionalCoefficient {
                dim: m.dim,
                main: m.expand(&main),
                frontal: m.expand(&inter),
            })
        })
        .collect()
}
