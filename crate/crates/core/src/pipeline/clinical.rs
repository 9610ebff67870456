//! Clinical table: `subject_id,time,event,sex,age,kps,volume,frontal`.
//!
//! `sex`, `age`, `kps` and `volume` are optional covariates. A covariate column that is
//! absent or entirely empty is dropped; `kps` is also dropped, with a warning, when only
//! some rows are empty. Unknown columns are ignored with a warning.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use crate::cox::{Survival, SurvivalRecord};
use crate::error::{Error, Result};

pub const COVARIATES: [&str; 4] = ["sex", "age", "kps", "volume"];
const REQUIRED: [&str; 4] = ["subject_id", "time", "event", "frontal"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRow {
    pub subject_id: String,
    /// Absent when the table has no outcome columns (prediction input).
    pub survival: Option<Survival>,
    pub frontal: bool,
    /// Values of the table's retained covariates, in [`ClinicalTable::covariates`] order.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalTable {
    pub covariates: Vec<String>,
    pub rows: Vec<ClinicalRow>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        format: "clinical CSV",
        message: message.into(),
    }
}

fn parse_flag(v: &str, what: &str, line: usize) -> Result<bool> {
    match v.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(bad(format!("line {line}: {what} must be 0 or 1, got {other:?}"))),
    }
}

fn parse_number(v: &str, what: &str, line: usize) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| bad(format!("line {line}: {what} is not a number: {v:?}")))?;
    if !x.is_finite() {
        return Err(bad(format!("line {line}: {what} must be finite")));
    }
    Ok(x)
}

fn parse_sex(v: &str, line: usize) -> Result<f64> {
    match v.trim() {
        "0" | "F" | "f" => Ok(0.0),
        "1" | "M" | "m" => Ok(1.0),
        other => Err(bad(format!("line {line}: sex must be 0/1 or F/M, got {other:?}"))),
    }
}

impl ClinicalTable {
    /// Parse a table. With `require_outcome`, `time` and `event` must be present and valid;
    /// otherwise they may be missing or empty.
    pub fn read<R: Read>(input: R, require_outcome: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        for name in REQUIRED {
            let needed = require_outcome || !matches!(name, "time" | "event");
            if needed && col(name).is_none() {
                return Err(bad(format!("missing required column {name:?}")));
            }
        }
        let mut seen = BTreeSet::new();
        for h in &header {
            if !seen.insert(h.as_str()) {
                return Err(bad(format!("duplicate column {h:?}")));
            }
            if !REQUIRED.contains(&h.as_str()) && !COVARIATES.contains(&h.as_str()) {
                log::warn!("clinical CSV: ignoring unknown column {h:?}");
            }
        }
        let records: Vec<csv::StringRecord> = rdr
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        if records.is_empty() {
            return Err(bad("no data rows"));
        }
        // Decide which covariates survive before parsing values.
        let mut kept: Vec<(&str, usize)> = Vec::new();
        for name in COVARIATES {
            let Some(c) = col(name) else { continue };
            let empty = records.iter().filter(|r| r.get(c).unwrap_or("").is_empty()).count();
            if empty == records.len() {
                log::warn!("clinical CSV: column {name:?} is empty and is dropped");
            } else if empty > 0 && name == "kps" {
                log::warn!("clinical CSV: {empty} rows have no KPS value; KPS is dropped");
            } else if empty > 0 {
                return Err(bad(format!("column {name:?} is empty in {empty} rows")));
            } else {
                kept.push((name, c));
            }
        }
        let mut ids = BTreeSet::new();
        let mut rows = Vec::with_capacity(records.len());
        for (k, rec) in records.iter().enumerate() {
            let line = k + 2;
            let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("");
            let subject_id = field(col("subject_id")).to_string();
            if subject_id.is_empty() {
                return Err(bad(format!("line {line}: empty subject_id")));
            }
            if !ids.insert(subject_id.clone()) {
                return Err(bad(format!("line {line}: duplicate subject_id {subject_id:?}")));
            }
            let (t, e) = (field(col("time")), field(col("event")));
            let survival = if !require_outcome && t.is_empty() && e.is_empty() {
                None
            } else {
                let time = parse_number(t, "time", line)?;
                let event = parse_flag(e, "event", line)?;
                Some(Survival::new(time, event).map_err(|_| bad(format!("line {line}: time must be positive")))?)
            };
            let frontal = parse_flag(field(col("frontal")), "frontal", line)?;
            let covariates = kept
                .iter()
                .map(|&(name, c)| {
                    let v = rec.get(c).unwrap_or("");
                    if name == "sex" {
                        parse_sex(v, line)
                    } else {
                        parse_number(v, name, line)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(ClinicalRow {
                subject_id,
                survival,
                frontal,
                covariates,
            });
        }
        Ok(ClinicalTable {
            covariates: kept.iter().map(|(n, _)| n.to_string()).collect(),
            rows,
        })
    }

    pub fn load(path: &Path, require_outcome: bool) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(f, require_outcome)
    }

    pub fn get(&self, subject_id: &str) -> Option<&ClinicalRow> {
        self.rows.iter().find(|r| r.subject_id == subject_id)
    }

    /// Records for model fitting; rows without outcomes get a placeholder censored time.
    pub fn record(&self, row: &ClinicalRow) -> SurvivalRecord {
        SurvivalRecord {
            subject_id: row.subject_id.clone(),
            survival: row.survival.unwrap_or(Survival { time: 1.0, event: false }),
            clinical: row.covariates.clone(),
            frontal: row.frontal,
        }
    }
}
