//! Group/location assignment and proportional-hazards survival times with exponential
//! baseline and exponential censoring.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cox::Survival;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// Log-hazard offsets per group and location; non-frontal Group A is the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazardCoefficients {
    pub b_frontal: f64,
    pub b_nonfrontal: f64,
    pub a_frontal: f64,
}

impl Default for HazardCoefficients {
    fn default() -> Self {
        HazardCoefficients {
            b_frontal: 0.8,
            b_nonfrontal: 0.4,
            a_frontal: -0.2,
        }
    }
}

impl HazardCoefficients {
    pub fn none() -> Self {
        HazardCoefficients {
            b_frontal: 0.0,
            b_nonfrontal: 0.0,
            a_frontal: 0.0,
        }
    }

    pub fn linear_predictor(&self, group: Group, frontal: bool) -> f64 {
        match (group, frontal) {
            (Group::B, true) => self.b_frontal,
            (Group::B, false) => self.b_nonfrontal,
            (Group::A, true) => self.a_frontal,
            (Group::A, false) => 0.0,
        }
    }
}

/// Exact group sizes and per-group frontal counts (rounded), in random order.
pub fn assign_groups<R: Rng + ?Sized>(
    n: usize,
    group_b_fraction: f64,
    frontal_fraction: f64,
    rng: &mut R,
) -> Vec<(Group, bool)> {
    let n_b = (n as f64 * group_b_fraction).round() as usize;
    let mut out = Vec::with_capacity(n);
    for (g, size) in [(Group::A, n - n_b), (Group::B, n_b)] {
        let frontal = (size as f64 * frontal_fraction).round() as usize;
        out.extend((0..size).map(|k| (g, k < frontal)));
    }
    out.shuffle(rng);
    out
}

/// Exponential censoring rate `c` with `mean_i c / (c + h_i) = target`, where `h_i` are the
/// subjects' event hazards. That mean is the exact censoring probability when event and
/// censoring times are independent exponentials.
pub fn calibrate_censoring_rate(hazards: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) || hazards.is_empty() || hazards.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("censoring calibration needs positive hazards and a target in (0, 1)"));
    }
    let frac = |c: f64| hazards.iter().map(|h| c / (c + h)).sum::<f64>() / hazards.len() as f64;
    let (mut lo, mut hi) = (0.0, hazards.iter().copied().fold(0.0, f64::max));
    while frac(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frac(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverse-transform event time `-ln U / (h0 exp(lp))`, censored by an independent
/// exponential with rate `censoring_rate`.
pub fn simulate_survival<R: Rng + ?Sized>(lp: f64, baseline_rate: f64, censoring_rate: f64, rng: &mut R) -> Survival {
    let draw = |rng: &mut R, rate: f64| {
        // 1 - U lies in (0, 1], so the log is finite.
        let u: f64 = 1.0 - rng.random::<f64>();
        -u.ln() / rate
    };
    let t = draw(rng, baseline_rate * lp.exp());
    let c = if censoring_rate > 0.0 {
        draw(rng, censoring_rate)
    } else {
        f64::INFINITY
    };
    // Times are strictly positive except with probability ~2^-53.
    let time = t.min(c).max(f64::MIN_POSITIVE);
    Survival { time, event: t <= c }
}
