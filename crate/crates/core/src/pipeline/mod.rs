//! End-to-end workflows behind the command-line tool: configuration, data assembly,
//! fitting, prediction, simulation and report files.

mod clinical;

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use clinical::{ClinicalRow, ClinicalTable, COVARIATES};

use crate::cox::DesignOptions;
use crate::cubical::{diagrams_of, read_diagrams_csv, regularize_infinite, write_diagrams_csv, Construction, PersistenceDiagram, SubjectDiagrams};
use crate::error::{Error, Result};
use crate::imaging::{sedt3, LabelVolume};
use crate::simulate::{run_simulation, SimConfig, SimulationReport};
use crate::surface::{rasterize_surface, write_surfaces_csv, GridSpec};
use crate::survstats::{kaplan_meier, log_rank_test, write_km_csv, KmCurve, LogRankResult};
use crate::svg::{heatmap_svg, km_svg};
use crate::tuning::{sigma_grid_search, Dataset, FittedModel, GridMode, GridPointRecord, SubjectData, TuningConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub sigmas: Vec<f64>,
    pub mode: GridMode,
    pub threshold: f64,
    pub folds: usize,
    pub path_len: usize,
    pub path_ratio: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        let t = TuningConfig::default();
        TuningSection {
            sigmas: t.sigmas,
            mode: t.mode,
            threshold: t.threshold,
            folds: t.cv.folds,
            path_len: t.cv.path_len,
            path_ratio: t.cv.path_ratio,
        }
    }
}

/// Settings of the `fit` workflow; the TOML config file maps onto this directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of label-volume headers (`*.json`).
    pub volumes: Option<PathBuf>,
    /// Precomputed diagrams CSV, used instead of `volumes`.
    pub diagrams: Option<PathBuf>,
    pub clinical: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub construction: Construction,
    /// Homology dimensions entering the model.
    pub dims: Vec<usize>,
    /// Fit clinical covariates only.
    pub no_topology: bool,
    /// Also write the tuning table as CSV.
    pub tuning_csv: bool,
    pub tuning: TuningSection,
    pub surface: GridSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            volumes: None,
            diagrams: None,
            clinical: None,
            output: PathBuf::from("phfcox-out"),
            seed: None,
            workers: 0,
            construction: Construction::V,
            dims: vec![0, 1, 2],
            no_topology: false,
            tuning_csv: false,
            tuning: TuningSection::default(),
            surface: GridSpec::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Parse a TOML document into a config type.
pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str, what: &'static str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Format {
        format: what,
        message: e.to_string(),
    })
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = parse_config(&text, "pipeline config")?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.volumes);
        resolve(base, &mut cfg.diagrams);
        resolve(base, &mut cfg.clinical);
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::invalid("a seed is required"));
        }
        let clinical = self.clinical.as_ref().ok_or_else(|| Error::invalid("a clinical table is required"))?;
        if !clinical.is_file() {
            return Err(Error::invalid(format!("clinical table {} does not exist", clinical.display())));
        }
        if !self.no_topology {
            match (&self.volumes, &self.diagrams) {
                (Some(_), Some(_)) => return Err(Error::invalid("give either volumes or diagrams, not both")),
                (None, None) => return Err(Error::invalid("volumes or diagrams are required unless no_topology is set")),
                (Some(v), None) if !v.is_dir() => {
                    return Err(Error::invalid(format!("volume directory {} does not exist", v.display())))
                }
                (None, Some(d)) if !d.is_file() => {
                    return Err(Error::invalid(format!("diagrams file {} does not exist", d.display())))
                }
                _ => {}
            }
            if self.dims.is_empty() || self.dims.iter().any(|&d| d > 2) {
                return Err(Error::invalid("dims must be a non-empty subset of 0, 1, 2"));
            }
        }
        self.tuning_config().validate()
    }

    pub fn tuning_config(&self) -> TuningConfig {
        let d = TuningConfig::default();
        TuningConfig {
            sigmas: self.tuning.sigmas.clone(),
            mode: self.tuning.mode,
            threshold: self.tuning.threshold,
            cv: crate::cox::CvOptions {
                folds: self.tuning.folds,
                path_len: self.tuning.path_len,
                path_ratio: self.tuning.path_ratio,
            },
            solver: d.solver,
            grid: self.surface.clone(),
            seed: self.seed.unwrap_or(0),
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Regularized diagrams of one label volume.
pub fn volume_diagrams(vol: &LabelVolume, construction: Construction, regularize: bool) -> Result<Vec<PersistenceDiagram>> {
    let sdv = sedt3(vol)?;
    let d = diagrams_of(&sdv, construction);
    Ok(if regularize {
        d.iter().map(regularize_infinite).collect()
    } else {
        d.to_vec()
    })
}

/// Diagrams for every `*.json` volume header in `dir`, in file-name order. Subjects are
/// named by the header's `subject_id`, or the file stem when that is empty.
pub fn load_volume_diagrams(dir: &Path, construction: Construction) -> Result<Vec<SubjectDiagrams>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .par_iter()
        .map(|p| {
            let vol = LabelVolume::load(p)?;
            let subject_id = if vol.subject_id.is_empty() {
                p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            } else {
                vol.subject_id.clone()
            };
            Ok(SubjectDiagrams {
                subject_id,
                diagrams: volume_diagrams(&vol, construction, true)?,
            })
        })
        .collect()
}

pub fn load_diagrams_csv(path: &Path) -> Result<Vec<SubjectDiagrams>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut subjects = read_diagrams_csv(f)?;
    for s in &mut subjects {
        s.diagrams = s.diagrams.iter().map(regularize_infinite).collect();
        while s.diagrams.len() < 3 {
            s.diagrams.push(PersistenceDiagram::empty(s.diagrams.len()));
        }
    }
    Ok(subjects)
}

/// Join clinical rows with diagrams by subject id, in clinical-table order.
pub fn assemble_dataset(
    table: &ClinicalTable,
    diagrams: Option<&[SubjectDiagrams]>,
    dims: &[usize],
    design: DesignOptions,
) -> Result<Dataset> {
    let mut subjects = Vec::with_capacity(table.rows.len());
    let mut missing = Vec::new();
    for row in &table.rows {
        let d = match diagrams {
            None => vec![PersistenceDiagram::empty(0), PersistenceDiagram::empty(1), PersistenceDiagram::empty(2)],
            Some(all) => match all.iter().find(|s| s.subject_id == row.subject_id) {
                Some(s) => s.diagrams.clone(),
                None => {
                    missing.push(row.subject_id.clone());
                    continue;
                }
            },
        };
        subjects.push(SubjectData {
            record: table.record(row),
            diagrams: d,
        });
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!("no shape data for subjects: {}", missing.join(", "))));
    }
    if let Some(all) = diagrams {
        let extra: Vec<&str> = all
            .iter()
            .filter(|s| table.get(&s.subject_id).is_none())
            .map(|s| s.subject_id.as_str())
            .collect();
        if !extra.is_empty() {
            return Err(Error::invalid(format!("no clinical row for subjects: {}", extra.join(", "))));
        }
    }
    Ok(Dataset {
        clinical_names: table.covariates.clone(),
        subjects,
        dims: dims.to_vec(),
        design,
    })
}

/// Saved model: everything needed to score new subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub construction: Construction,
    /// Subjects with a linear predictor above this are labelled high risk.
    pub risk_cutoff: f64,
    pub model: FittedModel,
}

pub const MODEL_FORMAT: &str = "phfcox-model";

impl ModelFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::Format {
            format: "model JSON",
            message: e.to_string(),
        })?;
        if m.format != MODEL_FORMAT || m.version != 1 {
            return Err(Error::Format {
                format: "model JSON",
                message: format!("unsupported model format {:?} version {}", m.format, m.version),
            });
        }
        m.model.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub selected: Vec<f64>,
    pub dims: Vec<usize>,
    pub lambda: f64,
    pub records: Vec<GridPointRecord>,
    pub log_rank: Option<LogRankResult>,
}

fn write_tuning_csv<W: Write>(out: W, records: &[GridPointRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["sigmas", "lambda", "ranks", "p_value", "statistic", "n_high", "n_low", "error"])
        .map_err(map)?;
    let join = |v: Vec<String>| v.join(";");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            join(r.sigmas.iter().map(f64::to_string).collect()),
            opt(r.lambda),
            join(r.ranks.iter().map(usize::to_string).collect()),
            opt(r.p_value),
            opt(r.statistic),
            r.n_high.to_string(),
            r.n_low.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<tuning csv>", e))
}

/// `subject_id,eta,group` rows.
pub fn write_risks_csv<W: Write>(out: W, rows: &[(String, Option<f64>, &str)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["subject_id", "eta", "group"]).map_err(map)?;
    for (id, eta, group) in rows {
        w.write_record([id.as_str(), &eta.map(|e| e.to_string()).unwrap_or_default(), group])
            .map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<risk csv>", e))
}

/// Read `subject_id,eta,group` rows.
pub fn read_risks_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, Option<f64>, String)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let bad = |m: String| Error::Format {
        format: "risk CSV",
        message: m,
    };
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["subject_id", "eta", "group"] {
        return Err(bad("header must be subject_id,eta,group".into()));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let eta = match &rec[1] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad(format!("line {}: bad eta {s:?}", k + 2)))?),
        };
        out.push((rec[0].to_string(), eta, rec[2].to_string()));
    }
    Ok(out)
}

/// KM curves and log-rank test for the high- and low-risk groups.
pub fn km_by_group(
    table: &ClinicalTable,
    groups: &[(String, String)],
) -> Result<(KmCurve, KmCurve, LogRankResult)> {
    let pick = |g: &str| -> Result<Vec<_>> {
        groups
            .iter()
            .filter(|(_, gg)| gg == g)
            .map(|(id, _)| {
                table
                    .get(id)
                    .and_then(|r| r.survival)
                    .ok_or_else(|| Error::invalid(format!("no outcome for subject {id}")))
            })
            .collect()
    };
    let (high, low) = (pick("high")?, pick("low")?);
    if high.is_empty() || low.is_empty() {
        return Err(Error::Degenerate("one of the risk groups is empty".into()));
    }
    Ok((kaplan_meier(&high)?, kaplan_meier(&low)?, log_rank_test(&high, &low)?))
}

fn write_km(out_dir: &Path, high: &KmCurve, low: &KmCurve, lr: &LogRankResult) -> Result<()> {
    let curves = [("high", high), ("low", low)];
    write_file(&out_dir.join("km.csv"), &csv_bytes(|b| write_km_csv(b, &curves))?)?;
    write_file(&out_dir.join("km.svg"), km_svg(&curves, Some(lr.p_value)).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub selected: Vec<f64>,
    pub lambda: f64,
    pub p_value: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
}

/// Tune, fit and write `tuning.json`, `model.json`, `risks.csv`, `km.csv`, `km.svg` and
/// `coefficients.csv` into the output directory.
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<FitSummary> {
    cfg.validate()?;
    let table = ClinicalTable::load(cfg.clinical.as_deref().expect("validated"), true)?;
    let diagrams = if cfg.no_topology {
        None
    } else if let Some(v) = &cfg.volumes {
        Some(load_volume_diagrams(v, cfg.construction)?)
    } else {
        Some(load_diagrams_csv(cfg.diagrams.as_deref().expect("validated"))?)
    };
    let dims: Vec<usize> = if cfg.no_topology { Vec::new() } else { cfg.dims.clone() };
    let ds = assemble_dataset(&table, diagrams.as_deref(), &dims, DesignOptions::default())?;
    let tuning = sigma_grid_search(&ds, &cfg.tuning_config())?;
    let out = &cfg.output;
    let eval = &tuning.selected_eval;
    let split = eval.split.as_ref().expect("selected point has a split");
    let risks: Vec<(String, Option<f64>, &str)> = ds
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let group = if split.high.contains(&i) {
                "high"
            } else if split.low.contains(&i) {
                "low"
            } else {
                "excluded"
            };
            (s.record.subject_id.clone(), eval.risks[i], group)
        })
        .collect();
    write_json(
        &out.join("tuning.json"),
        &TuningReport {
            selected: tuning.selected.clone(),
            dims: dims.clone(),
            lambda: tuning.model.fit.lambda,
            records: tuning.records.clone(),
            log_rank: eval.log_rank,
        },
    )?;
    if cfg.tuning_csv {
        write_file(&out.join("tuning.csv"), &csv_bytes(|b| write_tuning_csv(b, &tuning.records))?)?;
    }
    write_json(
        &out.join("model.json"),
        &ModelFile {
            format: MODEL_FORMAT.into(),
            version: 1,
            construction: cfg.construction,
            risk_cutoff: split.median,
            model: tuning.model.clone(),
        },
    )?;
    write_file(&out.join("risks.csv"), &csv_bytes(|b| write_risks_csv(b, &risks))?)?;
    let groups: Vec<(String, String)> = risks.iter().map(|(id, _, g)| (id.clone(), g.to_string())).collect();
    if split.degenerate {
        log::warn!("held-out risks do not separate the cohort; skipping km.csv and km.svg");
    } else {
        let (high, low, lr) = km_by_group(&table, &groups)?;
        write_km(out, &high, &low, &lr)?;
    }
    write_file(
        &out.join("coefficients.csv"),
        &csv_bytes(|b| write_coefficients_csv(b, &tuning.model))?,
    )?;
    Ok(FitSummary {
        selected: tuning.selected,
        lambda: tuning.model.fit.lambda,
        p_value: eval.log_rank.map(|l| l.p_value),
        n_high: split.high.len(),
        n_low: split.low.len(),
    })
}

/// `dim,kind,x,y,value` rows of the functional coefficients (`main`, `frontal`).
pub fn write_coefficients_csv<W: Write>(out: W, model: &FittedModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["dim", "kind", "x", "y", "value"]).map_err(map)?;
    for (m, f) in model.fpca.iter().zip(&model.functional) {
        for (kind, values) in [("main", &f.main), ("frontal", &f.frontal)] {
            for ((x, y), v) in m.grid.centers().zip(values) {
                w.write_record([m.dim.to_string(), kind.into(), x.to_string(), y.to_string(), v.to_string()])
                    .map_err(map)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<coefficient csv>", e))
}

/// Score new subjects with a saved model and write `subject_id,eta,group`.
pub fn cmd_predict(
    model_path: &Path,
    shapes: Option<&[SubjectDiagrams]>,
    clinical: &Path,
    out: &Path,
) -> Result<Vec<f64>> {
    let mf = ModelFile::load(model_path)?;
    let table = ClinicalTable::load(clinical, false)?;
    if table.covariates != mf.model.clinical_names {
        return Err(Error::invalid(format!(
            "clinical covariates {:?} do not match the model's {:?}",
            table.covariates, mf.model.clinical_names
        )));
    }
    let ds = assemble_dataset(&table, shapes, &mf.model.dims, mf.model.design)?;
    let eta = mf.model.predict(&ds.subjects)?;
    let rows: Vec<(String, Option<f64>, &str)> = ds
        .subjects
        .iter()
        .zip(&eta)
        .map(|(s, &e)| (s.record.subject_id.clone(), Some(e), if e > mf.risk_cutoff { "high" } else { "low" }))
        .collect();
    write_file(out, &csv_bytes(|b| write_risks_csv(b, &rows))?)?;
    Ok(eta)
}

/// Run the simulation study and write `simulation.json`, `datasets.csv`, `surfaces.csv`
/// and coefficient heatmaps.
pub fn cmd_simulate(cfg: &SimConfig, out: &Path) -> Result<SimulationReport> {
    let report = run_simulation(cfg)?;
    write_json(&out.join("simulation.json"), &report)?;
    write_file(&out.join("datasets.csv"), &csv_bytes(|b| report.write_datasets_csv(b))?)?;
    write_file(&out.join("surfaces.csv"), &csv_bytes(|b| report.write_surfaces_csv(b))?)?;
    for s in &report.surfaces {
        let title = format!("dimension {} {}", s.dim, s.kind);
        write_file(
            &out.join(format!("surface_d{}_{}.svg", s.dim, s.kind)),
            heatmap_svg(&s.grid, &s.values, &title).as_bytes(),
        )?;
    }
    Ok(report)
}

/// KM curves and log-rank test from a clinical table and a risk CSV's groups.
pub fn cmd_km(clinical: &Path, risks: &Path, out_dir: &Path) -> Result<LogRankResult> {
    let table = ClinicalTable::load(clinical, true)?;
    let f = std::fs::File::open(risks).map_err(|e| Error::io(risks, e))?;
    let groups: Vec<(String, String)> = read_risks_csv(f)?.into_iter().map(|(id, _, g)| (id, g)).collect();
    let (high, low, lr) = km_by_group(&table, &groups)?;
    write_km(out_dir, &high, &low, &lr)?;
    Ok(lr)
}

/// Signed distance volume of a label volume, written as text.
pub fn cmd_sedt(volume: &Path, out: &Path) -> Result<()> {
    let sdv = sedt3(&LabelVolume::load(volume)?)?;
    write_file(out, sdv.to_text().as_bytes())
}

/// Diagrams of one label volume as `subject_id,dim,birth,death` CSV.
pub fn cmd_ph(volume: &Path, out: &Path, construction: Construction, raw: bool) -> Result<SubjectDiagrams> {
    let vol = LabelVolume::load(volume)?;
    let subject_id = if vol.subject_id.is_empty() {
        volume.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        vol.subject_id.clone()
    };
    let s = SubjectDiagrams {
        subject_id,
        diagrams: volume_diagrams(&vol, construction, !raw)?,
    };
    write_file(out, &csv_bytes(|b| write_diagrams_csv(b, std::slice::from_ref(&s)))?)?;
    Ok(s)
}

/// Surfaces of every subject in a diagrams CSV, on one pooled grid per dimension.
pub fn cmd_surface(diagrams: &Path, sigma: f64, dims: &[usize], spec: &GridSpec, out: &Path) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let subjects = load_diagrams_csv(diagrams)?;
    let mut rows = Vec::new();
    for &dim in dims {
        let ds: Vec<&PersistenceDiagram> = subjects.iter().filter_map(|s| s.diagrams.get(dim)).collect();
        if ds.iter().all(|d| d.is_empty()) {
            log::warn!("dimension {dim}: every diagram is empty, skipped");
            continue;
        }
        let grid = spec.grid_for(ds.iter().copied(), sigma)?;
        for s in &subjects {
            rows.push((s.subject_id.clone(), rasterize_surface(&s.diagrams[dim], &grid, sigma)?));
        }
    }
    write_file(out, &csv_bytes(|b| write_surfaces_csv(b, &rows))?)
}
