//! Simulation study: synthetic 2D tumors of two shape groups, survival driven by group and
//! location, and recovery of functional coefficients by the full pipeline.

mod shapes;
mod survival;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use shapes::{generate_group_a, generate_group_b, BlobParams, GroupAParams, GroupBParams, ShapeParams};
pub use survival::{assign_groups, calibrate_censoring_rate, simulate_survival, Group, HazardCoefficients};

use crate::cox::{CvOptions, DesignOptions, SolverOptions, SurvivalRecord};
use crate::cubical::{diagrams_of, regularize_infinite, Construction, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::imaging::{sedt2, BinaryImage};
use crate::rng::{substream, substream_seed};
use crate::surface::{rasterize_surface, GridSpec, SurfaceGrid};
use crate::tuning::{evaluate_grid_point, fit_model, Dataset, GridMode, SubjectData, TuningConfig};

/// Birth threshold below which Group A's main body dominates dimension-0 surfaces.
pub const GROUP_A_BODY_MAX_BIRTH: f64 = -15.0;
/// Birth window dominated by Group B's mid-sized bodies.
pub const GROUP_B_CLUSTER_BIRTHS: (f64, f64) = (-10.0, -3.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub datasets: usize,
    pub n: usize,
    pub group_b_fraction: f64,
    pub frontal_fraction: f64,
    pub censoring: f64,
    pub baseline_rate: f64,
    pub hazard: HazardCoefficients,
    pub shapes: ShapeParams,
    /// Surface bandwidth shared by dimensions 0 and 1.
    pub sigma: f64,
    pub threshold: f64,
    pub cv: CvOptions,
    pub solver: SolverOptions,
    pub grid: GridSpec,
    /// Cells per axis of the grid the averaged surfaces are reported on.
    pub report_resolution: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            datasets: 300,
            n: 140,
            group_b_fraction: 0.5,
            frontal_fraction: 0.3,
            censoring: 0.15,
            baseline_rate: 1.0 / 3000.0,
            hazard: HazardCoefficients::default(),
            shapes: ShapeParams::default(),
            sigma: 2.0,
            threshold: 0.9,
            cv: CvOptions::default(),
            solver: SolverOptions::default(),
            grid: GridSpec::default(),
            report_resolution: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        frac("group_b_fraction", self.group_b_fraction)?;
        frac("frontal_fraction", self.frontal_fraction)?;
        frac("censoring", self.censoring)?;
        frac("threshold", self.threshold)?;
        if self.shapes.size < 50 {
            return Err(Error::invalid(format!("image size must be at least 50, got {}", self.shapes.size)));
        }
        if self.n < 10 || self.datasets == 0 {
            return Err(Error::invalid("need at least one dataset of at least 10 subjects"));
        }
        if !(self.baseline_rate > 0.0 && self.sigma > 0.0) || self.report_resolution < 2 {
            return Err(Error::invalid("baseline rate and sigma must be positive, report resolution at least 2"));
        }
        Ok(())
    }

    fn tuning(&self, dataset: usize) -> TuningConfig {
        TuningConfig {
            sigmas: vec![self.sigma],
            mode: GridMode::Shared,
            threshold: self.threshold,
            cv: self.cv,
            solver: self.solver,
            grid: self.grid.clone(),
            seed: substream_seed(self.seed, "sim-tuning", dataset as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSubject {
    pub subject_id: String,
    pub image: BinaryImage,
    pub group: Group,
    pub frontal: bool,
    pub record: SurvivalRecord,
}

/// Regularized dimension 0-2 diagrams of a binary image via the two-class signed distance.
pub fn image_diagrams(img: &BinaryImage) -> Result<Vec<PersistenceDiagram>> {
    let sdv = sedt2(img)?;
    Ok(diagrams_of(&sdv, Construction::V).iter().map(regularize_infinite).collect())
}

/// Subjects of dataset `index`; reproducible from the master seed alone.
pub fn generate_subjects(cfg: &SimConfig, index: usize) -> Result<Vec<SimSubject>> {
    let mut rng = substream(cfg.seed, "sim-dataset", index as u64);
    let layout = assign_groups(cfg.n, cfg.group_b_fraction, cfg.frontal_fraction, &mut rng);
    let hazards: Vec<f64> = layout
        .iter()
        .map(|&(g, f)| cfg.baseline_rate * cfg.hazard.linear_predictor(g, f).exp())
        .collect();
    let censoring_rate = calibrate_censoring_rate(&hazards, cfg.censoring)?;
    layout
        .into_iter()
        .enumerate()
        .map(|(i, (group, frontal))| {
            let image = match group {
                Group::A => generate_group_a(&cfg.shapes, &mut rng)?,
                Group::B => generate_group_b(&cfg.shapes, &mut rng)?,
            };
            let lp = cfg.hazard.linear_predictor(group, frontal);
            let survival = simulate_survival(lp, cfg.baseline_rate, censoring_rate, &mut rng);
            let subject_id = format!("sim{index:04}_{i:04}");
            Ok(SimSubject {
                record: SurvivalRecord {
                    subject_id: subject_id.clone(),
                    survival,
                    clinical: Vec::new(),
                    frontal,
                },
                subject_id,
                image,
                group,
                frontal,
            })
        })
        .collect()
}

/// Mean held-out risk per group and location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRisks {
    pub a_frontal: f64,
    pub a_nonfrontal: f64,
    pub b_frontal: f64,
    pub b_nonfrontal: f64,
}

impl GroupRisks {
    /// The planted ordering: B frontal > B non-frontal > A non-frontal.
    pub fn ordered(&self) -> bool {
        self.b_frontal > self.b_nonfrontal && self.b_nonfrontal > self.a_nonfrontal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub index: usize,
    pub censored_fraction: f64,
    pub mean_area_a: f64,
    pub mean_area_b: f64,
    pub lambda: Option<f64>,
    pub ranks: Vec<usize>,
    pub p_value: Option<f64>,
    pub group_risks: Option<GroupRisks>,
    pub error: Option<String>,
}

impl DatasetSummary {
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < 0.05)
    }

    pub fn ordered(&self) -> bool {
        self.group_risks.is_some_and(|g| g.ordered())
    }
}

/// A surface on its own grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValues {
    pub grid: SurfaceGrid,
    pub values: Vec<f64>,
}

struct DatasetOutcome {
    summary: DatasetSummary,
    /// Per dimension: non-frontal and frontal-interaction coefficient surfaces.
    coefficients: Vec<(usize, GridValues, GridValues)>,
    /// Mean dimension-0 surfaces of Group A and Group B subjects.
    group_means: Option<(GridValues, GridValues)>,
}

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn run_dataset(cfg: &SimConfig, index: usize) -> DatasetOutcome {
    let mut summary = DatasetSummary {
        index,
        censored_fraction: f64::NAN,
        mean_area_a: f64::NAN,
        mean_area_b: f64::NAN,
        lambda: None,
        ranks: Vec::new(),
        p_value: None,
        group_risks: None,
        error: None,
    };
    let mut coefficients = Vec::new();
    let mut group_means = None;
    let result = (|| -> Result<()> {
        let subjects = generate_subjects(cfg, index)?;
        summary.censored_fraction = mean_of(subjects.iter().map(|s| f64::from(!s.record.survival.event)));
        let area = |g: Group| mean_of(subjects.iter().filter(|s| s.group == g).map(|s| s.image.area() as f64));
        summary.mean_area_a = area(Group::A);
        summary.mean_area_b = area(Group::B);
        let data = subjects
            .iter()
            .map(|s| {
                Ok(SubjectData {
                    record: s.record.clone(),
                    diagrams: image_diagrams(&s.image)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset {
            clinical_names: Vec::new(),
            subjects: data,
            dims: vec![0, 1],
            design: DesignOptions::default(),
        };
        let tcfg = cfg.tuning(index);
        let sigmas = [cfg.sigma, cfg.sigma];
        let eval = evaluate_grid_point(&ds, &sigmas, &tcfg);
        summary.lambda = eval.record.lambda;
        summary.ranks = eval.record.ranks.clone();
        summary.p_value = eval.record.p_value;
        if eval.risks.len() == subjects.len() {
            let risk = |g: Group, f: bool| {
                mean_of(
                    subjects
                        .iter()
                        .zip(&eval.risks)
                        .filter(|(s, r)| s.group == g && s.frontal == f && r.is_some())
                        .map(|(_, r)| r.expect("filtered")),
                )
            };
            summary.group_risks = Some(GroupRisks {
                a_frontal: risk(Group::A, true),
                a_nonfrontal: risk(Group::A, false),
                b_frontal: risk(Group::B, true),
                b_nonfrontal: risk(Group::B, false),
            });
        }
        if let Some(e) = &eval.record.error {
            return Err(Error::Numerical(e.clone()));
        }
        let model = fit_model(&ds, &sigmas, &tcfg, eval.cv.clone())?;
        for (m, f) in model.fpca.iter().zip(&model.functional) {
            coefficients.push((
                m.dim,
                GridValues { grid: m.grid.clone(), values: f.main.clone() },
                GridValues { grid: m.grid.clone(), values: f.frontal.clone() },
            ));
        }
        if let Some(m0) = model.fpca.iter().find(|m| m.dim == 0) {
            let mean_surface = |g: Group| -> Result<GridValues> {
                let mut acc = vec![0.0; m0.grid.len()];
                let mut count = 0.0;
                for (s, d) in subjects.iter().zip(&ds.subjects) {
                    if s.group == g {
                        let surf = rasterize_surface(&d.diagrams[0], &m0.grid, m0.sigma)?;
                        acc.iter_mut().zip(&surf.values).for_each(|(a, v)| *a += v);
                        count += 1.0;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= count);
                Ok(GridValues { grid: m0.grid.clone(), values: acc })
            };
            group_means = Some((mean_surface(Group::A)?, mean_surface(Group::B)?));
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("simulated dataset {index}: {e}");
        summary.error = Some(e.to_string());
    }
    DatasetOutcome {
        summary,
        coefficients,
        group_means,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedSurface {
    pub dim: usize,
    pub kind: String,
    pub grid: SurfaceGrid,
    pub values: Vec<f64>,
    /// Datasets contributing to the average.
    pub count: usize,
}

/// Weighted mean of the averaged non-frontal dimension-0 coefficient over the two birth
/// regions, weighted by the average surfaces of the group dominating each region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionEffects {
    pub group_a_body: f64,
    pub group_b_clusters: f64,
    pub opposite_signs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub datasets: Vec<DatasetSummary>,
    /// Averaged coefficient surfaces (`main`, `frontal`) and dimension-0 group means
    /// (`group_a`, `group_b`) on common grids.
    pub surfaces: Vec<AveragedSurface>,
    pub fraction_significant: f64,
    pub fraction_ordered: f64,
    pub region_effects: Option<RegionEffects>,
}

impl SimulationReport {
    pub fn surface(&self, dim: usize, kind: &str) -> Option<&AveragedSurface> {
        self.surfaces.iter().find(|s| s.dim == dim && s.kind == kind)
    }

    /// One row per dataset.
    pub fn write_datasets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record([
            "dataset",
            "censored_fraction",
            "mean_area_a",
            "mean_area_b",
            "lambda",
            "rank_d0",
            "rank_d1",
            "p_value",
            "risk_a_frontal",
            "risk_a_nonfrontal",
            "risk_b_frontal",
            "risk_b_nonfrontal",
            "error",
        ])
        .map_err(map)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for d in &self.datasets {
            let r = d.group_risks;
            w.write_record([
                d.index.to_string(),
                d.censored_fraction.to_string(),
                d.mean_area_a.to_string(),
                d.mean_area_b.to_string(),
                opt(d.lambda),
                d.ranks.first().map(|r| r.to_string()).unwrap_or_default(),
                d.ranks.get(1).map(|r| r.to_string()).unwrap_or_default(),
                opt(d.p_value),
                opt(r.map(|g| g.a_frontal)),
                opt(r.map(|g| g.a_nonfrontal)),
                opt(r.map(|g| g.b_frontal)),
                opt(r.map(|g| g.b_nonfrontal)),
                d.error.clone().unwrap_or_default(),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<simulation csv>", e))
    }

    /// `dim,kind,x,y,value` rows for every averaged surface.
    pub fn write_surfaces_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(["dim", "kind", "x", "y", "value"]).map_err(map)?;
        for s in &self.surfaces {
            for ((x, y), v) in s.grid.centers().zip(&s.values) {
                w.write_record([s.dim.to_string(), s.kind.clone(), x.to_string(), y.to_string(), v.to_string()])
                    .map_err(map)?;
            }
        }
        w.flush().map_err(|e| Error::io("<surface csv>", e))
    }
}

/// Smallest grid covering every item's grid.
fn union_grid(items: &[&GridValues], resolution: usize) -> Option<SurfaceGrid> {
    let first = items.first()?;
    let mut b = (first.grid.x_min, first.grid.x_max, first.grid.y_min, first.grid.y_max);
    for g in items.iter().map(|i| &i.grid) {
        b = (b.0.min(g.x_min), b.1.max(g.x_max), b.2.min(g.y_min), b.3.max(g.y_max));
    }
    SurfaceGrid::new((b.0, b.1), (b.2, b.3), resolution, resolution).ok()
}

/// Bilinear resampling of each item onto `grid`, averaged.
fn resample_mean(items: &[&GridValues], grid: &SurfaceGrid) -> Vec<f64> {
    let mut acc = vec![0.0; grid.len()];
    for it in items {
        for (a, (x, y)) in acc.iter_mut().zip(grid.centers()) {
            *a += it.grid.interpolate(&it.values, x, y);
        }
    }
    if !items.is_empty() {
        acc.iter_mut().for_each(|a| *a /= items.len() as f64);
    }
    acc
}

fn region_mean(grid: &SurfaceGrid, beta: &[f64], weight: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (((x, _), b), w) in grid.centers().zip(beta).zip(weight) {
        if keep(x) {
            num += b * w;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn region_effects(report: &SimulationReport) -> Option<RegionEffects> {
    let beta = report.surface(0, "main")?;
    let wa = report.surface(0, "group_a")?;
    let wb = report.surface(0, "group_b")?;
    if beta.grid != wa.grid || beta.grid != wb.grid {
        return None;
    }
    let a = region_mean(&beta.grid, &beta.values, &wa.values, |x| x <= GROUP_A_BODY_MAX_BIRTH);
    let (lo, hi) = GROUP_B_CLUSTER_BIRTHS;
    let b = region_mean(&beta.grid, &beta.values, &wb.values, |x| (lo..=hi).contains(&x));
    Some(RegionEffects {
        group_a_body: a,
        group_b_clusters: b,
        opposite_signs: a * b < 0.0,
    })
}

/// Generate and analyze every dataset, then average coefficient surfaces.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let outcomes: Vec<DatasetOutcome> = (0..cfg.datasets).into_par_iter().map(|i| run_dataset(cfg, i)).collect();
    let mut surfaces = Vec::new();
    let dims: Vec<usize> = {
        let mut d: Vec<usize> = outcomes.iter().flat_map(|o| o.coefficients.iter().map(|c| c.0)).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    for dim in dims {
        let main: Vec<&GridValues> = outcomes
            .iter()
            .flat_map(|o| o.coefficients.iter().filter(|c| c.0 == dim).map(|c| &c.1))
            .collect();
        let frontal: Vec<&GridValues> = outcomes
            .iter()
            .flat_map(|o| o.coefficients.iter().filter(|c| c.0 == dim).map(|c| &c.2))
            .collect();
        let mut kinds = vec![("main", main), ("frontal", frontal)];
        if dim == 0 {
            kinds.push(("group_a", outcomes.iter().filter_map(|o| o.group_means.as_ref().map(|g| &g.0)).collect()));
            kinds.push(("group_b", outcomes.iter().filter_map(|o| o.group_means.as_ref().map(|g| &g.1)).collect()));
        }
        // All kinds of one dimension share the union grid of the coefficient surfaces.
        let union: Vec<&GridValues> = kinds.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let Some(grid) = union_grid(&union, cfg.report_resolution) else {
            continue;
        };
        for (kind, items) in kinds {
            surfaces.push(AveragedSurface {
                dim,
                kind: kind.to_string(),
                grid: grid.clone(),
                values: resample_mean(&items, &grid),
                count: items.len(),
            });
        }
    }
    let datasets: Vec<DatasetSummary> = outcomes.into_iter().map(|o| o.summary).collect();
    let total = datasets.len() as f64;
    let mut report = SimulationReport {
        config: cfg.clone(),
        fraction_significant: datasets.iter().filter(|d| d.significant()).count() as f64 / total,
        fraction_ordered: datasets.iter().filter(|d| d.ordered()).count() as f64 / total,
        datasets,
        surfaces,
        region_effects: None,
    };
    report.region_effects = region_effects(&report);
    Ok(report)
}
