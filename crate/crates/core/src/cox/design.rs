use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed follow-up: time and whether it ended in the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Survival {
    pub time: f64,
    pub event: bool,
}

impl Survival {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::invalid(format!("survival time must be finite and positive, got {time}")));
        }
        Ok(Survival { time, event })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub subject_id: String,
    pub survival: Survival,
    /// Clinical covariates in the order of the table's clinical column names.
    pub clinical: Vec<f64>,
    pub frontal: bool,
}

/// What a design column holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    Clinical { name: String },
    Frontal,
    Score { dim: usize, k: usize },
    Interaction { dim: usize, k: usize },
}

impl ColumnRole {
    pub fn penalized(&self) -> bool {
        matches!(self, ColumnRole::Score { .. } | ColumnRole::Interaction { .. })
    }

    pub fn label(&self) -> String {
        match self {
            ColumnRole::Clinical { name } => name.clone(),
            ColumnRole::Frontal => "frontal".into(),
            ColumnRole::Score { dim, k } => format!("score_d{dim}_k{}", k + 1),
            ColumnRole::Interaction { dim, k } => format!("score_d{dim}_k{}_x_frontal", k + 1),
        }
    }
}

/// FPC scores of one homology dimension, one row per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn rank(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Include the frontal indicator as an unpenalized main effect.
    pub frontal_main_effect: bool,
    /// Include score-by-frontal interaction columns.
    pub interactions: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            frontal_main_effect: true,
            interactions: true,
        }
    }
}

/// Row-major `n x p` design with column roles; penalized columns are exactly the score and
/// interaction columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub n: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub roles: Vec<ColumnRole>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>], roles: Vec<ColumnRole>) -> Result<Self> {
        let p = roles.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::invalid(format!("design row has {} entries, expected {p}", r.len())));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains a non-finite value"));
        }
        Ok(DesignMatrix {
            n: rows.len(),
            p,
            x: rows.concat(),
            roles,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.p + j]
    }

    pub fn penalty_mask(&self) -> Vec<bool> {
        self.roles.iter().map(ColumnRole::penalized).collect()
    }

    /// Submatrix of the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            n: idx.len(),
            p: self.p,
            x: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            roles: self.roles.clone(),
        }
    }
}

/// Assemble `[clinical..., frontal, scores by (dim, k)..., interactions by (dim, k)...]`.
pub fn build_design(
    records: &[SurvivalRecord],
    clinical_names: &[String],
    scores: &[ScoreMatrix],
    opts: DesignOptions,
) -> Result<DesignMatrix> {
    let n = records.len();
    for s in scores {
        if s.rows.len() != n {
            return Err(Error::invalid(format!(
                "dimension {} has scores for {} subjects but there are {n} records",
                s.dim,
                s.rows.len()
            )));
        }
        if s.rows.iter().any(|r| r.len() != s.rank()) {
            return Err(Error::invalid(format!("ragged score matrix for dimension {}", s.dim)));
        }
    }
    if let Some(r) = records.iter().find(|r| r.clinical.len() != clinical_names.len()) {
        return Err(Error::invalid(format!(
            "subject {} has {} clinical values, expected {}",
            r.subject_id,
            r.clinical.len(),
            clinical_names.len()
        )));
    }
    let mut roles: Vec<ColumnRole> = clinical_names
        .iter()
        .map(|name| ColumnRole::Clinical { name: name.clone() })
        .collect();
    if opts.frontal_main_effect {
        roles.push(ColumnRole::Frontal);
    }
    for s in scores {
        roles.extend((0..s.rank()).map(|k| ColumnRole::Score { dim: s.dim, k }));
    }
    if opts.interactions {
        for s in scores {
            roles.extend((0..s.rank()).map(|k| ColumnRole::Interaction { dim: s.dim, k }));
        }
    }
    let rows: Vec<Vec<f64>> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let f = if r.frontal { 1.0 } else { 0.0 };
            let mut row = r.clinical.clone();
            if opts.frontal_main_effect {
                row.push(f);
            }
            for s in scores {
                row.extend_from_slice(&s.rows[i]);
            }
            if opts.interactions {
                for s in scores {
                    row.extend(s.rows[i].iter().map(|e| e * f));
                }
            }
            row
        })
        .collect();
    DesignMatrix::from_rows(&rows, roles)
}
