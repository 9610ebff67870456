//! Kaplan-Meier curves, the two-sample log-rank test and median-risk stratification.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cox::Survival;
use crate::error::{Error, Result};

/// One step of a product-limit curve, at a distinct observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
    /// Greenwood sum `sum d / (n (n - d))` up to this time.
    pub greenwood: f64,
}

impl KmStep {
    /// Greenwood variance of the survival estimate.
    pub fn variance(&self) -> f64 {
        self.survival * self.survival * self.greenwood
    }

    /// Pointwise confidence interval on the log scale, `S * exp(-/+ z se(log S))`.
    pub fn log_ci(&self, z: f64) -> (f64, f64) {
        if self.survival == 0.0 || !self.greenwood.is_finite() {
            return (0.0, 0.0);
        }
        let h = z * self.greenwood.sqrt();
        ((self.survival * (-h).exp()).max(0.0), (self.survival * h.exp()).min(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub steps: Vec<KmStep>,
}

impl KmCurve {
    /// Survival probability at time `t` (right-continuous step function, 1 before the first step).
    pub fn at(&self, t: f64) -> f64 {
        self.steps.iter().take_while(|s| s.time <= t).last().map_or(1.0, |s| s.survival)
    }
}

pub fn kaplan_meier(records: &[Survival]) -> Result<KmCurve> {
    if records.is_empty() {
        return Err(Error::invalid("Kaplan-Meier needs at least one record"));
    }
    let mut sorted: Vec<Survival> = records.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut gw = 0.0;
    let mut steps = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let j = i + sorted[i..].iter().take_while(|r| r.time == t).count();
        let d = sorted[i..j].iter().filter(|r| r.event).count();
        let c = (j - i) - d;
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            gw += if d < at_risk {
                d as f64 / (at_risk as f64 * (at_risk - d) as f64)
            } else {
                f64::INFINITY
            };
        }
        steps.push(KmStep {
            time: t,
            at_risk,
            events: d,
            censored: c,
            survival: s,
            greenwood: gw,
        });
        at_risk -= j - i;
        i = j;
    }
    Ok(KmCurve { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Observed minus expected events in the first group.
    pub observed_minus_expected: f64,
    pub variance: f64,
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        libm::erfc((x / 2.0).sqrt())
    }
}

pub fn log_rank_test(a: &[Survival], b: &[Survival]) -> Result<LogRankResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("log-rank test needs two non-empty groups"));
    }
    let mut all: Vec<(f64, bool, bool)> = a
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(b.iter().map(|r| (r.time, r.event, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut n_a, mut n) = (a.len() as f64, all.len() as f64);
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let j = i + all[i..].iter().take_while(|r| r.0 == t).count();
        let d = all[i..j].iter().filter(|r| r.1).count() as f64;
        let d_a = all[i..j].iter().filter(|r| r.1 && r.2).count() as f64;
        if d > 0.0 {
            o_minus_e += d_a - d * n_a / n;
            if n > 1.0 {
                var += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
            }
        }
        n_a -= all[i..j].iter().filter(|r| r.2).count() as f64;
        n -= (j - i) as f64;
        i = j;
    }
    let statistic = if var > 0.0 { o_minus_e * o_minus_e / var } else { 0.0 };
    Ok(LogRankResult {
        statistic,
        p_value: chi2_1_sf(statistic),
        observed_minus_expected: o_minus_e,
        variance: var,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSplit {
    /// Subject indices with risk above the cut.
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    pub median: f64,
    /// Every risk equal, or nothing above the cut.
    pub degenerate: bool,
}

/// Split at `m`, the `floor(n/2)`-th smallest risk: risk `> m` is high, `<= m` is low.
/// With distinct risks the high group has `ceil(n/2)` subjects.
pub fn median_risk_split(risks: &[f64]) -> Result<RiskSplit> {
    if risks.len() < 2 {
        return Err(Error::invalid("median split needs at least 2 subjects"));
    }
    if risks.iter().any(|r| r.is_nan()) {
        return Err(Error::invalid("risk scores contain NaN"));
    }
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[risks.len() / 2 - 1];
    let (high, low): (Vec<usize>, Vec<usize>) = (0..risks.len()).partition(|&i| risks[i] > median);
    let degenerate = high.is_empty() || sorted[0] == sorted[sorted.len() - 1];
    Ok(RiskSplit {
        high,
        low,
        median,
        degenerate,
    })
}

/// Write `group,time,survival,lower,upper,at_risk,events,censored` rows with 95% log-scale
/// Greenwood limits.
pub fn write_km_csv<W: Write>(out: W, curves: &[(&str, &KmCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["group", "time", "survival", "lower", "upper", "at_risk", "events", "censored"])
        .map_err(map)?;
    for (name, curve) in curves {
        for s in &curve.steps {
            let (lo, hi) = s.log_ci(1.959_963_984_540_054);
            w.write_record([
                name.to_string(),
                s.time.to_string(),
                s.survival.to_string(),
                lo.to_string(),
                hi.to_string(),
                s.at_risk.to_string(),
                s.events.to_string(),
                s.censored.to_string(),
            ])
            .map_err(map)?;
        }
    }
    w.flush().map_err(|e| Error::io("<km csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: f64, e: bool) -> Survival {
        Survival::new(t, e).unwrap()
    }

    #[test]
    fn km_small_cases() {
        let all = kaplan_meier(&[s(1.0, true), s(2.0, true), s(3.0, true)]).unwrap();
        let v: Vec<f64> = all.steps.iter().map(|x| x.survival).collect();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15 && (v[1] - 1.0 / 3.0).abs() < 1e-15 && v[2] == 0.0);
        let cens = kaplan_meier(&[s(1.0, false), s(2.0, true), s(3.0, true)]).unwrap();
        let v: Vec<f64> = cens.steps.iter().map(|x| x.survival).collect();
        assert_eq!(v, vec![1.0, 0.5, 0.0]);
        let none = kaplan_meier(&[s(1.0, false), s(2.0, false)]).unwrap();
        assert!(none.steps.iter().all(|x| x.survival == 1.0));
        assert_eq!(cens.at(0.5), 1.0);
        assert_eq!(cens.at(2.5), 0.5);
    }

    #[test]
    fn log_rank_identical_groups_and_symmetry() {
        let a = [s(1.0, true), s(3.0, false), s(4.0, true)];
        let r = log_rank_test(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let b = [s(2.0, true), s(5.0, true)];
        let ab = log_rank_test(&a, &b).unwrap();
        let ba = log_rank_test(&b, &a).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-15 && (ab.p_value - ba.p_value).abs() < 1e-15);
        let z = log_rank_test(&[s(1.0, false)], &[s(2.0, false)]).unwrap();
        assert_eq!((z.statistic, z.p_value), (0.0, 1.0));
    }

    #[test]
    fn chi2_tail() {
        assert!((chi2_1_sf(3.841_458_820_694_124) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn median_split_conventions() {
        let sp = median_risk_split(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((sp.high, sp.low), (vec![2, 3], vec![0, 1]));
        let r: Vec<f64> = (0..133).map(|i| ((i * 37) % 133) as f64).collect();
        let sp = median_risk_split(&r).unwrap();
        assert_eq!((sp.high.len(), sp.low.len()), (67, 66));
        assert!(median_risk_split(&[2.0, 2.0, 2.0]).unwrap().degenerate);
    }
}
