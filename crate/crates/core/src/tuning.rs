//! Bandwidth selection: for each bandwidth combination, profile the penalty by
//! cross-validation, estimate leave-one-out risks, split at the median and keep the
//! combination with the smallest log-rank p-value.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::{
    build_design, cv_lambda, functional_coefficients, ColumnRole, CoxFit, CoxProblem, CvOptions, CvResult,
    DesignMatrix, DesignOptions, FunctionalCoefficient, ScoreMatrix, SolverOptions, Survival, SurvivalRecord,
};
use crate::cubical::PersistenceDiagram;
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, fpca_from_gram, raw_gram, FpcaModel};
use crate::rng::substream;
use crate::surface::{rasterize_surface, GridSpec, PersistenceSurface, SurfaceGrid};
use crate::survstats::{log_rank_test, median_risk_split, LogRankResult, RiskSplit};

/// One subject: outcome, clinical covariates and regularized diagrams indexed by homology
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectData {
    pub record: SurvivalRecord,
    pub diagrams: Vec<PersistenceDiagram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub clinical_names: Vec<String>,
    pub subjects: Vec<SubjectData>,
    /// Homology dimensions that enter the model, in column order.
    pub dims: Vec<usize>,
    pub design: DesignOptions,
}

impl Dataset {
    pub fn survival(&self) -> Vec<Survival> {
        self.subjects.iter().map(|s| s.record.survival).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.subjects.len() < 3 {
            return Err(Error::invalid(format!("need at least 3 subjects, got {}", self.subjects.len())));
        }
        for s in &self.subjects {
            if let Some(&d) = self.dims.iter().find(|&&d| d >= s.diagrams.len()) {
                return Err(Error::invalid(format!(
                    "subject {} has no dimension-{d} diagram",
                    s.record.subject_id
                )));
            }
            if s.diagrams.iter().flat_map(|d| d.points()).any(|(_, dth)| !dth.is_finite()) {
                return Err(Error::invalid(format!(
                    "subject {} has an unregularized essential class",
                    s.record.subject_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Every combination of per-dimension bandwidths.
    Full,
    /// One bandwidth shared by all dimensions.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub sigmas: Vec<f64>,
    pub mode: GridMode,
    pub threshold: f64,
    pub cv: CvOptions,
    pub solver: SolverOptions,
    pub grid: GridSpec,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            sigmas: (1..=10).map(|k| (k as f64 * 0.3 * 10.0).round() / 10.0).collect(),
            mode: GridMode::Full,
            threshold: 0.9,
            cv: CvOptions::default(),
            solver: SolverOptions::default(),
            grid: GridSpec::default(),
            seed: 0,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("bandwidth grid must be non-empty and positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("variance threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// Bandwidth combinations in lexicographic order.
pub fn sigma_grid(values: &[f64], mode: GridMode, ndims: usize) -> Vec<Vec<f64>> {
    if ndims == 0 {
        return vec![Vec::new()];
    }
    match mode {
        GridMode::Shared => values.iter().map(|&s| vec![s; ndims]).collect(),
        GridMode::Full => {
            let mut out = vec![Vec::new()];
            for _ in 0..ndims {
                out = out
                    .into_iter()
                    .flat_map(|prefix: Vec<f64>| {
                        values.iter().map(move |&s| {
                            let mut p = prefix.clone();
                            p.push(s);
                            p
                        })
                    })
                    .collect();
            }
            out
        }
    }
}

/// Surfaces of every subject for one homology dimension on the pooled grid.
struct DimFeatures {
    dim: usize,
    sigma: f64,
    grid: SurfaceGrid,
    surfaces: Vec<PersistenceSurface>,
    gram: DMatrix<f64>,
}

fn rasterize_all(diagrams: &[&PersistenceDiagram], grid: &SurfaceGrid, sigma: f64) -> Result<Vec<PersistenceSurface>> {
    diagrams.iter().map(|d| rasterize_surface(d, grid, sigma)).collect()
}

/// `None` when every diagram of the dimension is empty.
fn dim_features(ds: &Dataset, dim: usize, sigma: f64, spec: &GridSpec) -> Result<Option<DimFeatures>> {
    let diagrams: Vec<&PersistenceDiagram> = ds.subjects.iter().map(|s| &s.diagrams[dim]).collect();
    if diagrams.iter().all(|d| d.is_empty()) {
        log::warn!("every dimension-{dim} diagram is empty; the dimension contributes no features");
        return Ok(None);
    }
    let grid = spec.grid_for(diagrams.iter().copied(), sigma)?;
    let surfaces = rasterize_all(&diagrams, &grid, sigma)?;
    let gram = raw_gram(&surfaces.iter().collect::<Vec<_>>());
    Ok(Some(DimFeatures {
        dim,
        sigma,
        grid,
        surfaces,
        gram,
    }))
}

fn design_for(ds: &Dataset, idx: &[usize], scores: &[ScoreMatrix]) -> Result<DesignMatrix> {
    let records: Vec<SurvivalRecord> = idx.iter().map(|&i| ds.subjects[i].record.clone()).collect();
    build_design(&records, &ds.clinical_names, scores, ds.design)
}

/// A model fitted on a whole dataset at fixed bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub sigmas: Vec<f64>,
    pub dims: Vec<usize>,
    pub clinical_names: Vec<String>,
    pub design: DesignOptions,
    pub fpca: Vec<FpcaModel>,
    pub roles: Vec<ColumnRole>,
    pub fit: CoxFit,
    pub cv: CvResult,
    pub functional: Vec<FunctionalCoefficient>,
}

impl FittedModel {
    /// Structural consistency of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("inconsistent model: {m}")));
        if self.fit.coefficients.len() != self.roles.len() {
            return bad(format!("{} coefficients for {} columns", self.fit.coefficients.len(), self.roles.len()));
        }
        for m in &self.fpca {
            let g = &m.grid;
            SurfaceGrid::new((g.x_min, g.x_max), (g.y_min, g.y_max), g.nx, g.ny)?;
            let cells = g.nx.checked_mul(g.ny);
            if cells.is_none_or(|c| c > 1 << 24) {
                return bad(format!("dimension {} grid is too large", m.dim));
            }
            if !self.dims.contains(&m.dim) || !(m.sigma.is_finite() && m.sigma > 0.0) {
                return bad(format!("dimension {} has a bad homology dimension or bandwidth", m.dim));
            }
            if m.mean.len() != g.len()
                || m.rank != m.eigenfunctions.len()
                || m.rank > m.eigenvalues.len()
                || m.eigenfunctions.iter().any(|phi| phi.len() != g.len())
            {
                return bad(format!("dimension {} FPCA arrays do not match its grid and rank", m.dim));
            }
        }
        Ok(())
    }

    /// Linear predictors of new subjects.
    pub fn predict(&self, subjects: &[SubjectData]) -> Result<Vec<f64>> {
        let mut scores = Vec::new();
        for m in &self.fpca {
            let rows = subjects
                .iter()
                .map(|s| {
                    let d = s.diagrams.get(m.dim).ok_or_else(|| {
                        Error::invalid(format!("subject {} has no dimension-{} diagram", s.record.subject_id, m.dim))
                    })?;
                    m.project_scores(&rasterize_surface(d, &m.grid, m.sigma)?)
                })
                .collect::<Result<Vec<_>>>()?;
            scores.push(ScoreMatrix { dim: m.dim, rows });
        }
        let records: Vec<SurvivalRecord> = subjects.iter().map(|s| s.record.clone()).collect();
        let design = build_design(&records, &self.clinical_names, &scores, self.design)?;
        if design.roles != self.roles {
            return Err(Error::invalid("prediction design does not match the fitted columns"));
        }
        Ok((0..design.n).map(|i| self.fit.risk_score(design.row(i))).collect())
    }
}

/// Full-data FPCA, scores and design at the given bandwidths.
struct FullFeatures {
    dims: Vec<DimFeatures>,
    models: Vec<FpcaModel>,
    design: DesignMatrix,
}

fn full_features(ds: &Dataset, sigmas: &[f64], cfg: &TuningConfig) -> Result<FullFeatures> {
    if sigmas.len() != ds.dims.len() {
        return Err(Error::invalid(format!(
            "{} bandwidths for {} homology dimensions",
            sigmas.len(),
            ds.dims.len()
        )));
    }
    let mut dims = Vec::new();
    for (&d, &s) in ds.dims.iter().zip(sigmas) {
        if let Some(f) = dim_features(ds, d, s, &cfg.grid)? {
            dims.push(f);
        }
    }
    let mut models = Vec::new();
    let mut scores = Vec::new();
    for f in &dims {
        let m = fit_fpca(&f.surfaces.iter().collect::<Vec<_>>(), cfg.threshold)?;
        let rows = f.surfaces.iter().map(|s| m.project_scores(s)).collect::<Result<Vec<_>>>()?;
        scores.push(ScoreMatrix { dim: f.dim, rows });
        models.push(m);
    }
    let all: Vec<usize> = (0..ds.subjects.len()).collect();
    let design = design_for(ds, &all, &scores)?;
    Ok(FullFeatures { dims, models, design })
}

fn profile_lambda(ds: &Dataset, design: &DesignMatrix, cfg: &TuningConfig) -> Result<CvResult> {
    let mut rng = substream(cfg.seed, "cv-folds", 0);
    cv_lambda(design, &ds.survival(), cfg.cv, cfg.solver, &mut rng)
}

/// Fit FPCA and the penalized Cox model on the whole dataset. The penalty is profiled by
/// cross-validation unless `cv` is supplied.
pub fn fit_model(ds: &Dataset, sigmas: &[f64], cfg: &TuningConfig, cv: Option<CvResult>) -> Result<FittedModel> {
    ds.validate()?;
    let ff = full_features(ds, sigmas, cfg)?;
    let cv = match cv {
        Some(c) => c,
        None => profile_lambda(ds, &ff.design, cfg)?,
    };
    let prob = CoxProblem::new(&ff.design, &ds.survival(), cfg.solver)?;
    let fit = prob.fit(cv.lambda, None)?;
    let functional = functional_coefficients(&fit, &ff.design.roles, &ff.models)?;
    Ok(FittedModel {
        sigmas: sigmas.to_vec(),
        dims: ds.dims.clone(),
        clinical_names: ds.clinical_names.clone(),
        design: ds.design,
        fpca: ff.models,
        roles: ff.design.roles.clone(),
        fit,
        cv,
        functional,
    })
}

/// Held-out linear predictor of one subject.
fn loo_risk(ds: &Dataset, dims: &[DimFeatures], i: usize, lambda: f64, cfg: &TuningConfig) -> Result<f64> {
    let n = ds.subjects.len();
    let train: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut train_scores = Vec::new();
    let mut test_scores = Vec::new();
    for f in dims {
        let pool: Vec<&PersistenceDiagram> = train.iter().map(|&j| &ds.subjects[j].diagrams[f.dim]).collect();
        let fold = if pool.iter().all(|d| d.is_empty()) {
            None
        } else {
            let grid = cfg.grid.grid_for(pool.iter().copied(), f.sigma)?;
            if grid == f.grid {
                Some(fpca_from_gram(&f.gram, &train, &[i], cfg.threshold)?)
            } else {
                let all: Vec<&PersistenceDiagram> = ds.subjects.iter().map(|s| &s.diagrams[f.dim]).collect();
                let surfaces = rasterize_all(&all, &grid, f.sigma)?;
                let gram = raw_gram(&surfaces.iter().collect::<Vec<_>>());
                Some(fpca_from_gram(&gram, &train, &[i], cfg.threshold)?)
            }
        };
        let (tr, te) = match fold {
            Some(fold) => (fold.train_scores, fold.test_scores[0].clone()),
            None => (vec![Vec::new(); train.len()], Vec::new()),
        };
        train_scores.push(ScoreMatrix { dim: f.dim, rows: tr });
        test_scores.push(ScoreMatrix { dim: f.dim, rows: vec![te] });
    }
    let design = design_for(ds, &train, &train_scores)?;
    let surv: Vec<Survival> = train.iter().map(|&j| ds.subjects[j].record.survival).collect();
    let fit = CoxProblem::new(&design, &surv, cfg.solver)?.fit(lambda, None)?;
    let row = design_for(ds, &[i], &test_scores)?;
    Ok(fit.risk_score(row.row(0)))
}

/// Leave-one-out linear predictors at a fixed penalty. Grids and FPCA bases are recomputed
/// without the held-out subject; failed folds yield `None`.
pub fn loocv_risks(ds: &Dataset, sigmas: &[f64], lambda: f64, cfg: &TuningConfig) -> Result<Vec<Option<f64>>> {
    ds.validate()?;
    let ff = full_features(ds, sigmas, cfg)?;
    Ok(loocv_with(ds, &ff.dims, lambda, cfg))
}

fn loocv_with(ds: &Dataset, dims: &[DimFeatures], lambda: f64, cfg: &TuningConfig) -> Vec<Option<f64>> {
    (0..ds.subjects.len())
        .into_par_iter()
        .map(|i| match loo_risk(ds, dims, i, lambda, cfg) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("leave-one-out fit without {} failed: {e}", ds.subjects[i].record.subject_id);
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointRecord {
    pub sigmas: Vec<f64>,
    pub lambda: Option<f64>,
    pub ranks: Vec<usize>,
    pub p_value: Option<f64>,
    pub statistic: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
    /// Subjects whose leave-one-out fit failed.
    pub excluded: Vec<String>,
    pub error: Option<String>,
}

/// Everything computed at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointEval {
    pub record: GridPointRecord,
    pub cv: Option<CvResult>,
    pub risks: Vec<Option<f64>>,
    pub split: Option<RiskSplit>,
    pub log_rank: Option<LogRankResult>,
}

fn split_and_test(ds: &Dataset, risks: &[Option<f64>]) -> Result<(RiskSplit, LogRankResult)> {
    let kept: Vec<usize> = (0..risks.len()).filter(|&i| risks[i].is_some()).collect();
    let values: Vec<f64> = kept.iter().map(|&i| risks[i].expect("filtered")).collect();
    let mut split = median_risk_split(&values)?;
    split.high = split.high.iter().map(|&k| kept[k]).collect();
    split.low = split.low.iter().map(|&k| kept[k]).collect();
    if split.degenerate {
        // Nothing separates the groups: score as no evidence.
        let lr = LogRankResult {
            statistic: 0.0,
            p_value: 1.0,
            observed_minus_expected: 0.0,
            variance: 0.0,
        };
        return Ok((split, lr));
    }
    let group = |idx: &[usize]| -> Vec<Survival> { idx.iter().map(|&i| ds.subjects[i].record.survival).collect() };
    let lr = log_rank_test(&group(&split.high), &group(&split.low))?;
    Ok((split, lr))
}

/// Profile the penalty, compute leave-one-out risks, split and test at one grid point.
/// Failures are recorded rather than returned.
pub fn evaluate_grid_point(ds: &Dataset, sigmas: &[f64], cfg: &TuningConfig) -> GridPointEval {
    let mut record = GridPointRecord {
        sigmas: sigmas.to_vec(),
        lambda: None,
        ranks: Vec::new(),
        p_value: None,
        statistic: None,
        n_high: 0,
        n_low: 0,
        excluded: Vec::new(),
        error: None,
    };
    let mut eval = GridPointEval {
        record: record.clone(),
        cv: None,
        risks: Vec::new(),
        split: None,
        log_rank: None,
    };
    let result = (|| -> Result<()> {
        let ff = full_features(ds, sigmas, cfg)?;
        record.ranks = ds
            .dims
            .iter()
            .map(|d| ff.models.iter().find(|m| m.dim == *d).map_or(0, |m| m.rank))
            .collect();
        let cv = profile_lambda(ds, &ff.design, cfg)?;
        record.lambda = Some(cv.lambda);
        let risks = loocv_with(ds, &ff.dims, cv.lambda, cfg);
        record.excluded = (0..risks.len())
            .filter(|&i| risks[i].is_none())
            .map(|i| ds.subjects[i].record.subject_id.clone())
            .collect();
        eval.cv = Some(cv);
        eval.risks = risks;
        let (split, lr) = split_and_test(ds, &eval.risks)?;
        record.p_value = Some(lr.p_value);
        record.statistic = Some(lr.statistic);
        record.n_high = split.high.len();
        record.n_low = split.low.len();
        eval.split = Some(split);
        eval.log_rank = Some(lr);
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("grid point {sigmas:?}: {e}");
        record.error = Some(e.to_string());
    }
    eval.record = record;
    eval
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub selected: Vec<f64>,
    pub records: Vec<GridPointRecord>,
    /// Leave-one-out analysis at the selected grid point.
    pub selected_eval: GridPointEval,
    pub model: FittedModel,
}

/// Evaluate every grid point and select the smallest log-rank p-value. Ties keep the
/// earlier (lexicographically smaller) bandwidths.
pub fn sigma_grid_search(ds: &Dataset, cfg: &TuningConfig) -> Result<TuningResult> {
    cfg.validate()?;
    ds.validate()?;
    if ds.subjects.iter().filter(|s| s.record.survival.event).count() < 2 {
        return Err(Error::Degenerate("need at least 2 events".into()));
    }
    let grid = sigma_grid(&cfg.sigmas, cfg.mode, ds.dims.len());
    let evals: Vec<GridPointEval> = grid.par_iter().map(|s| evaluate_grid_point(ds, s, cfg)).collect();
    let mut best: Option<usize> = None;
    for (k, e) in evals.iter().enumerate() {
        if let Some(p) = e.record.p_value {
            if best.is_none_or(|b| p < evals[b].record.p_value.expect("chosen with p")) {
                best = Some(k);
            }
        }
    }
    let best = best.ok_or_else(|| {
        let first = evals.iter().find_map(|e| e.record.error.clone()).unwrap_or_default();
        Error::Degenerate(format!("every grid point failed; first error: {first}"))
    })?;
    let selected = grid[best].clone();
    let model = fit_model(ds, &selected, cfg, evals[best].cv.clone())?;
    let records = evals.iter().map(|e| e.record.clone()).collect();
    let selected_eval = evals.into_iter().nth(best).expect("index in range");
    Ok(TuningResult {
        selected,
        records,
        selected_eval,
        model,
    })
}
