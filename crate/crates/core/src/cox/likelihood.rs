//! Breslow partial likelihood with exact gradient and Hessian.

use crate::cox::design::{DesignMatrix, Survival};
use crate::error::{Error, Result};

/// Risk-set bookkeeping for a fixed set of survival outcomes over a row-major design.
#[derive(Debug, Clone)]
pub struct PartialLikelihood<'a> {
    x: &'a [f64],
    n: usize,
    p: usize,
    events: Vec<bool>,
    /// Subjects in descending time order, split into groups of equal time.
    order: Vec<usize>,
    groups: Vec<(usize, usize)>,
    n_events: usize,
}

/// Value, gradient and (optionally) Hessian of the unnormalized log partial likelihood.
#[derive(Debug, Clone)]
pub struct LogLik {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `p x p` negative Hessian (the observed information), when requested.
    pub information: Option<Vec<f64>>,
}

impl<'a> PartialLikelihood<'a> {
    pub fn new(x: &'a [f64], p: usize, surv: &[Survival]) -> Result<Self> {
        let n = surv.len();
        if x.len() != n * p {
            return Err(Error::invalid(format!("design has {} entries, expected {n} x {p}", x.len())));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| surv[b].time.total_cmp(&surv[a].time).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || surv[order[k]].time != surv[order[start]].time {
                groups.push((start, k));
                start = k;
            }
        }
        Ok(PartialLikelihood {
            x,
            n,
            p,
            events: surv.iter().map(|s| s.event).collect(),
            order,
            groups,
            n_events: surv.iter().filter(|s| s.event).count(),
        })
    }

    pub fn for_design(design: &'a DesignMatrix, surv: &[Survival]) -> Result<Self> {
        if design.n != surv.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but {} survival records",
                design.n,
                surv.len()
            )));
        }
        Self::new(&design.x, design.p, surv)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Log partial likelihood only.
    pub fn log_lik(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta, false, false).value
    }

    pub fn evaluate(&self, beta: &[f64], gradient: bool, information: bool) -> LogLik {
        let p = self.p;
        let eta = self.linear_predictor(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; if gradient || information { p } else { 0 }];
        let mut s2 = vec![0.0; if information { p * p } else { 0 }];
        let mut value = 0.0;
        let mut grad = vec![0.0; if gradient { p } else { 0 }];
        let mut info = vec![0.0; if information { p * p } else { 0 }];
        for &(a, b) in &self.groups {
            let mut d = 0usize;
            for &i in &self.order[a..b] {
                let w = (eta[i] - shift).exp();
                s0 += w;
                let xi = self.row(i);
                if !s1.is_empty() {
                    s1.iter_mut().zip(xi).for_each(|(s, x)| *s += w * x);
                }
                if information {
                    for r in 0..p {
                        let wr = w * xi[r];
                        if wr != 0.0 {
                            for c in r..p {
                                s2[r * p + c] += wr * xi[c];
                            }
                        }
                    }
                }
                if self.events[i] {
                    d += 1;
                    value += eta[i];
                    if gradient {
                        grad.iter_mut().zip(xi).for_each(|(g, x)| *g += x);
                    }
                }
            }
            if d == 0 {
                continue;
            }
            let df = d as f64;
            value -= df * (s0.ln() + shift);
            if gradient {
                grad.iter_mut().zip(&s1).for_each(|(g, s)| *g -= df * s / s0);
            }
            if information {
                for r in 0..p {
                    for c in r..p {
                        info[r * p + c] += df * (s2[r * p + c] / s0 - s1[r] * s1[c] / (s0 * s0));
                    }
                }
            }
        }
        if information {
            for r in 0..p {
                for c in 0..r {
                    info[r * p + c] = info[c * p + r];
                }
            }
        }
        LogLik {
            value,
            gradient: grad,
            information: information.then_some(info),
        }
    }
}

/// `-(1/n) log PL(beta)` and its gradient on the original covariate scale.
pub fn neg_log_partial_likelihood(beta: &[f64], design: &DesignMatrix, surv: &[Survival]) -> Result<(f64, Vec<f64>)> {
    if beta.len() != design.p {
        return Err(Error::invalid(format!("expected {} coefficients, got {}", design.p, beta.len())));
    }
    let lik = PartialLikelihood::for_design(design, surv)?;
    if lik.n_events() == 0 {
        return Err(Error::Degenerate("every subject is censored; the partial likelihood is constant".into()));
    }
    let ll = lik.evaluate(beta, true, false);
    let n = design.n as f64;
    Ok((-ll.value / n, ll.gradient.iter().map(|g| -g / n).collect()))
}
