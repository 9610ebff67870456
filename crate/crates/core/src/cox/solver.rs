//! Proximal Newton solver for the l1-penalized Cox model.
//!
//! Each outer step builds the exact quadratic model of `-(1/n) log PL` around the current
//! standardized coefficients, minimizes it plus the l1 term by cyclic coordinate descent
//! (no soft-thresholding on unpenalized columns), then backtracks on the penalized objective.

use serde::{Deserialize, Serialize};

use crate::cox::design::{DesignMatrix, Survival};
use crate::cox::likelihood::PartialLikelihood;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Converged when no standardized coefficient moves more than this in an outer step.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on coordinate-descent sweeps per quadratic subproblem.
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 100,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Coefficients on the original covariate scale.
    pub coefficients: Vec<f64>,
    /// Coefficients on the internal standardized scale (the scale the penalty acts on).
    pub standardized: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized objective on the standardized scale.
    pub objective: f64,
    /// `x_i' beta` per training subject.
    pub linear_predictors: Vec<f64>,
}

impl CoxFit {
    pub fn risk_score(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// A design and outcomes prepared for repeated fits (standardized columns, risk sets).
#[derive(Debug, Clone)]
pub struct CoxProblem {
    design: DesignMatrix,
    surv: Vec<Survival>,
    xs: Vec<f64>,
    scale: Vec<f64>,
    penalized: Vec<bool>,
    /// Columns allowed to move: non-constant ones.
    active: Vec<bool>,
    opts: SolverOptions,
    null_fit: Option<(Vec<f64>, f64)>,
}

fn soft_threshold(z: f64, l: f64) -> f64 {
    if z > l {
        z - l
    } else if z < -l {
        z + l
    } else {
        0.0
    }
}

impl CoxProblem {
    pub fn new(design: &DesignMatrix, surv: &[Survival], opts: SolverOptions) -> Result<Self> {
        if design.n != surv.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but {} survival records",
                design.n,
                surv.len()
            )));
        }
        if !surv.iter().any(|s| s.event) {
            return Err(Error::Degenerate("every subject is censored; nothing to fit".into()));
        }
        let (n, p) = (design.n, design.p);
        let mut center = vec![0.0; p];
        let mut scale = vec![0.0; p];
        for j in 0..p {
            let m = (0..n).map(|i| design.get(i, j)).sum::<f64>() / n as f64;
            let v = (0..n).map(|i| (design.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
            center[j] = m;
            scale[j] = v.sqrt();
        }
        // Columns whose spread is pure rounding noise are treated as constant.
        let active: Vec<bool> = (0..p)
            .map(|j| scale[j] > 1e-12 * center[j].abs().max(1.0))
            .collect();
        let mut xs = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                if active[j] {
                    xs[i * p + j] = (design.get(i, j) - center[j]) / scale[j];
                }
            }
        }
        let mut prob = CoxProblem {
            design: design.clone(),
            surv: surv.to_vec(),
            xs,
            scale,
            penalized: design.penalty_mask(),
            active,
            opts,
            null_fit: None,
        };
        let free: Vec<bool> = (0..p).map(|j| prob.active[j] && !prob.penalized[j]).collect();
        let (beta0, _, _, _) = prob.solve(&free, 0.0, &vec![0.0; p])?;
        let lik = prob.lik();
        let g = lik.evaluate(&beta0, true, false).gradient;
        let lambda_max = (0..p)
            .filter(|&j| prob.active[j] && prob.penalized[j])
            .map(|j| g[j].abs() / n as f64)
            .fold(0.0, f64::max);
        prob.null_fit = Some((beta0, lambda_max));
        Ok(prob)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn survival(&self) -> &[Survival] {
        &self.surv
    }

    fn lik(&self) -> PartialLikelihood<'_> {
        PartialLikelihood::new(&self.xs, self.design.p, &self.surv).expect("validated in new")
    }

    /// Smallest penalty at which every penalized coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        self.null_fit.as_ref().map_or(0.0, |(_, l)| *l)
    }

    /// `count` log-spaced penalties from `lambda_max` down to `lambda_max * ratio`.
    pub fn lambda_path(&self, count: usize, ratio: f64) -> Vec<f64> {
        lambda_path(self.lambda_max(), count, ratio)
    }

    fn objective(&self, lik: &PartialLikelihood<'_>, beta: &[f64], lambda: f64) -> f64 {
        let pen: f64 = beta
            .iter()
            .zip(&self.penalized)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b.abs())
            .sum();
        -lik.log_lik(beta) / self.design.n as f64 + lambda * pen
    }

    /// Returns `(beta, objective, iterations, converged)` on the standardized scale.
    fn solve(&self, free: &[bool], lambda: f64, start: &[f64]) -> Result<(Vec<f64>, f64, usize, bool)> {
        let p = self.design.p;
        let nf = self.design.n as f64;
        let lik = self.lik();
        let mut beta: Vec<f64> = (0..p).map(|j| if free[j] { start[j] } else { 0.0 }).collect();
        let mut obj = self.objective(&lik, &beta, lambda);
        if !obj.is_finite() {
            beta = vec![0.0; p];
            obj = self.objective(&lik, &beta, lambda);
        }
        let cols: Vec<usize> = (0..p).filter(|&j| free[j]).collect();
        if cols.is_empty() {
            return Ok((beta, obj, 0, true));
        }
        for iter in 1..=self.opts.max_iter {
            let ev = lik.evaluate(&beta, true, true);
            let g: Vec<f64> = ev.gradient.iter().map(|v| -v / nf).collect();
            let h: Vec<f64> = ev.information.expect("requested").iter().map(|v| v / nf).collect();
            let mut d = vec![0.0; p];
            let mut hd = vec![0.0; p];
            for _ in 0..self.opts.max_sweeps {
                let mut biggest = 0.0f64;
                for &j in &cols {
                    let hjj = h[j * p + j];
                    if hjj <= 1e-14 {
                        continue;
                    }
                    let r = g[j] + hd[j] - hjj * d[j];
                    let z = hjj * beta[j] - r;
                    let b_new = if self.penalized[j] { soft_threshold(z, lambda) } else { z } / hjj;
                    let delta = b_new - (beta[j] + d[j]);
                    if delta != 0.0 {
                        d[j] += delta;
                        for (k, v) in hd.iter_mut().enumerate() {
                            *v += delta * h[k * p + j];
                        }
                        biggest = biggest.max(delta.abs());
                    }
                }
                if biggest < 1e-12 {
                    break;
                }
            }
            let step_max = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_max < self.opts.tol {
                return Ok((beta, obj, iter, true));
            }
            let pen_now: f64 = cols.iter().filter(|&&j| self.penalized[j]).map(|&j| beta[j].abs()).sum();
            let pen_new: f64 = cols
                .iter()
                .filter(|&&j| self.penalized[j])
                .map(|&j| (beta[j] + d[j]).abs())
                .sum();
            let decrease = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + lambda * (pen_new - pen_now);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let trial: Vec<f64> = beta.iter().zip(&d).map(|(b, s)| b + t * s).collect();
                let o = self.objective(&lik, &trial, lambda);
                if o.is_finite() && o <= obj + 1e-4 * t * decrease.min(0.0) {
                    accepted = Some((trial, o));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, o)) => {
                    beta = trial;
                    obj = o;
                    if t * step_max < self.opts.tol {
                        return Ok((beta, obj, iter, true));
                    }
                }
                None => {
                    // No descent along the Newton direction: the quadratic model and the
                    // objective disagree only at rounding level.
                    let converged = step_max < self.opts.tol.sqrt();
                    return Ok((beta, obj, iter, converged));
                }
            }
        }
        Ok((beta, obj, self.opts.max_iter, false))
    }

    fn finish(&self, standardized: Vec<f64>, lambda: f64, objective: f64, iterations: usize, converged: bool) -> CoxFit {
        let coefficients: Vec<f64> = standardized
            .iter()
            .enumerate()
            .map(|(j, b)| if self.active[j] { b / self.scale[j] } else { 0.0 })
            .collect();
        let linear_predictors = (0..self.design.n)
            .map(|i| self.design.row(i).iter().zip(&coefficients).map(|(a, b)| a * b).sum())
            .collect();
        CoxFit {
            coefficients,
            standardized,
            lambda,
            converged,
            iterations,
            objective,
            linear_predictors,
        }
    }

    /// Fit at `lambda`, optionally warm-started from standardized coefficients.
    pub fn fit(&self, lambda: f64, warm: Option<&[f64]>) -> Result<CoxFit> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("penalty must be finite and non-negative, got {lambda}")));
        }
        let (beta0, lambda_max) = self.null_fit.as_ref().expect("set in new");
        let has_penalized = (0..self.design.p).any(|j| self.active[j] && self.penalized[j]);
        if !has_penalized || lambda >= *lambda_max {
            let lik = self.lik();
            let obj = self.objective(&lik, beta0, lambda);
            return Ok(self.finish(beta0.clone(), lambda, obj, 0, true));
        }
        let start = warm.map_or_else(|| beta0.clone(), <[f64]>::to_vec);
        if start.len() != self.design.p {
            return Err(Error::invalid("warm start has the wrong length"));
        }
        let (beta, obj, iters, converged) = self.solve(&self.active, lambda, &start)?;
        if !converged {
            log::warn!("Cox fit at lambda {lambda:.3e} did not converge in {iters} iterations");
        }
        Ok(self.finish(beta, lambda, obj, iters, converged))
    }

    /// Fits along a descending penalty path with warm starts.
    pub fn fit_path(&self, lambdas: &[f64]) -> Result<Vec<CoxFit>> {
        let mut out: Vec<CoxFit> = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            let warm = out.last().map(|f| f.standardized.clone());
            out.push(self.fit(l, warm.as_deref())?);
        }
        Ok(out)
    }
}

pub fn lambda_path(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count <= 1 || lambda_max == 0.0 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..count)
        .map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// One-shot penalized fit.
pub fn fit_penalized_cox(design: &DesignMatrix, surv: &[Survival], lambda: f64) -> Result<CoxFit> {
    CoxProblem::new(design, surv, SolverOptions::default())?.fit(lambda, None)
}
