//! K-fold cross-validation of the penalty using the partial-likelihood deviance of
//! Verweij and Van Houwelingen.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cox::design::{DesignMatrix, Survival};
use crate::cox::likelihood::PartialLikelihood;
use crate::cox::solver::{CoxProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    pub folds: usize,
    pub path_len: usize,
    /// Smallest penalty on the path as a fraction of `lambda_max`.
    pub path_ratio: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            path_len: 50,
            path_ratio: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean cross-validated deviance per penalty.
    pub deviance: Vec<f64>,
    pub best_index: usize,
    pub lambda: f64,
    /// Folds actually used.
    pub folds: usize,
}

/// Event-stratified fold labels: events and censored subjects are shuffled separately and
/// dealt round-robin, so each fold gets at least one event when `folds <= #events`.
pub fn stratified_folds(surv: &[Survival], folds: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut events: Vec<usize> = (0..surv.len()).filter(|&i| surv[i].event).collect();
    let mut censored: Vec<usize> = (0..surv.len()).filter(|&i| !surv[i].event).collect();
    events.shuffle(rng);
    censored.shuffle(rng);
    let mut label = vec![0; surv.len()];
    for (k, i) in events.into_iter().chain(censored).enumerate() {
        label[i] = k % folds;
    }
    label
}

/// Choose the penalty minimizing the mean CV deviance over a log-spaced path. Ties go to
/// the larger penalty.
pub fn cv_lambda(
    design: &DesignMatrix,
    surv: &[Survival],
    opts: CvOptions,
    solver: SolverOptions,
    rng: &mut StreamRng,
) -> Result<CvResult> {
    let n = surv.len();
    let n_events = surv.iter().filter(|s| s.event).count();
    if n_events < 2 {
        return Err(Error::Degenerate(format!(
            "cross-validation needs at least 2 events, found {n_events}"
        )));
    }
    let mut k = opts.folds.min(n);
    if k > n_events {
        log::warn!("only {n_events} events: using {n_events} folds instead of {k}");
        k = n_events;
    }
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let full = CoxProblem::new(design, surv, solver)?;
    let lambdas = full.lambda_path(opts.path_len, opts.path_ratio);
    let labels = stratified_folds(surv, k, rng);
    let full_lik = PartialLikelihood::for_design(design, surv)?;
    let mut total = vec![0.0; lambdas.len()];
    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
        let tr_design = design.select_rows(&train);
        let tr_surv: Vec<Survival> = train.iter().map(|&i| surv[i]).collect();
        let tr_lik = PartialLikelihood::for_design(&tr_design, &tr_surv)?;
        let prob = CoxProblem::new(&tr_design, &tr_surv, solver)?;
        let fits = prob.fit_path(&lambdas)?;
        for (t, f) in total.iter_mut().zip(&fits) {
            *t += -2.0 * (full_lik.log_lik(&f.coefficients) - tr_lik.log_lik(&f.coefficients));
        }
    }
    let deviance: Vec<f64> = total.iter().map(|t| t / k as f64).collect();
    let mut best_index = 0;
    for (i, d) in deviance.iter().enumerate() {
        if *d < deviance[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        lambda: lambdas[best_index],
        lambdas,
        deviance,
        best_index,
        folds: k,
    })
}
