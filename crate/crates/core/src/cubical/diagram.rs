use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dim: usize,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes.
    pub death: f64,
}

impl PersistencePair {
    pub fn is_essential(&self) -> bool {
        self.death == f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub dim: usize,
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn empty(dim: usize) -> Self {
        PersistenceDiagram { dim, pairs: Vec::new() }
    }

    pub fn from_points(dim: usize, points: &[(f64, f64)]) -> Self {
        PersistenceDiagram {
            dim,
            pairs: points.iter().map(|&(birth, death)| PersistencePair { dim, birth, death }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pairs.iter().map(|p| (p.birth, p.death))
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_essential()).count()
    }

    /// Sort pairs by birth, then death.
    pub fn sort(&mut self) {
        self.pairs
            .sort_by(|a, b| a.birth.total_cmp(&b.birth).then(a.death.total_cmp(&b.death)));
    }
}

/// Replace each essential `(b, inf)` by `(b, b)`.
pub fn regularize_infinite(d: &PersistenceDiagram) -> PersistenceDiagram {
    PersistenceDiagram {
        dim: d.dim,
        pairs: d
            .pairs
            .iter()
            .map(|p| PersistencePair {
                death: if p.is_essential() { p.birth } else { p.death },
                ..*p
            })
            .collect(),
    }
}

/// Pair counts by quadrant of the (birth, death) plane.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    /// birth > 0, death > 0
    pub i: usize,
    /// birth < 0, death > 0
    pub ii: usize,
    /// birth < 0, death < 0
    pub iii: usize,
    /// birth > 0, death < 0
    pub iv: usize,
}

/// Count pairs per quadrant. A zero coordinate takes the sign of the other one; `(0, 0)` counts as III.
pub fn quadrant_summary(d: &PersistenceDiagram) -> QuadrantCounts {
    let mut q = QuadrantCounts::default();
    for (b, dth) in d.points() {
        let (b, dth) = match (b == 0.0, dth == 0.0) {
            (true, true) => (-1.0, -1.0),
            (true, false) => (dth, dth),
            (false, true) => (b, b),
            _ => (b, dth),
        };
        match (b > 0.0, dth > 0.0) {
            (true, true) => q.i += 1,
            (false, true) => q.ii += 1,
            (false, false) => q.iii += 1,
            (true, false) => q.iv += 1,
        }
    }
    q
}

/// Diagrams of one subject, indexed by dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDiagrams {
    pub subject_id: String,
    pub diagrams: Vec<PersistenceDiagram>,
}

const CSV_FORMAT: &str = "diagram CSV";

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        v.to_string()
    }
}

/// Write `subject_id,dim,birth,death` rows; essential deaths are written as `inf`.
pub fn write_diagrams_csv<W: Write>(out: W, subjects: &[SubjectDiagrams]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::format(CSV_FORMAT, e.to_string());
    w.write_record(["subject_id", "dim", "birth", "death"]).map_err(map)?;
    for s in subjects {
        for d in &s.diagrams {
            for p in &d.pairs {
                w.write_record([
                    s.subject_id.clone(),
                    d.dim.to_string(),
                    fmt_value(p.birth),
                    fmt_value(p.death),
                ])
                .map_err(map)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<diagram csv>", e))
}

/// Read a combined diagram CSV. Subjects keep their order of first appearance, and every
/// subject gets diagrams for dimensions `0..=max_dim` seen in the file (possibly empty).
pub fn read_diagrams_csv<R: Read>(input: R) -> Result<Vec<SubjectDiagrams>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(|e| Error::format(CSV_FORMAT, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(CSV_FORMAT, format!("missing column {name:?}")))
    };
    let (c_sub, c_dim, c_birth, c_death) = (col("subject_id")?, col("dim")?, col("birth")?, col("death")?);
    let mut out: Vec<SubjectDiagrams> = Vec::new();
    let mut max_dim = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(CSV_FORMAT, e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let at = |what: &str| format!("row {}: bad {what}", line + 2);
        let dim: usize = field(c_dim).parse().map_err(|_| Error::format(CSV_FORMAT, at("dim")))?;
        if dim > 2 {
            return Err(Error::format(CSV_FORMAT, at("dim (must be 0, 1 or 2)")));
        }
        let birth: f64 = field(c_birth)
            .parse()
            .ok()
            .filter(|b: &f64| b.is_finite())
            .ok_or_else(|| Error::format(CSV_FORMAT, at("birth")))?;
        let death: f64 = match field(c_death) {
            "inf" => f64::INFINITY,
            s => s
                .parse()
                .ok()
                .filter(|d: &f64| d.is_finite())
                .ok_or_else(|| Error::format(CSV_FORMAT, at("death")))?,
        };
        if death < birth {
            return Err(Error::format(CSV_FORMAT, at("pair (death before birth)")));
        }
        let subject = field(c_sub);
        if subject.is_empty() {
            return Err(Error::format(CSV_FORMAT, at("subject_id")));
        }
        let entry = match out.iter().position(|s| s.subject_id == subject) {
            Some(i) => &mut out[i],
            None => {
                out.push(SubjectDiagrams {
                    subject_id: subject.to_string(),
                    diagrams: Vec::new(),
                });
                out.last_mut().unwrap()
            }
        };
        while entry.diagrams.len() <= dim {
            let d = entry.diagrams.len();
            entry.diagrams.push(PersistenceDiagram::empty(d));
        }
        entry.diagrams[dim].pairs.push(PersistencePair { dim, birth, death });
        max_dim = max_dim.max(dim);
    }
    for s in &mut out {
        while s.diagrams.len() <= max_dim {
            let d = s.diagrams.len();
            s.diagrams.push(PersistenceDiagram::empty(d));
        }
    }
    Ok(out)
}
