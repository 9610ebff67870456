//! Acceptance gate. Each test prints one `PASS`/`FAIL` line to stderr (uncaptured) and
//! fails when its criterion is not met.

mod support;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use phfcox::cox::{ColumnRole, CoxProblem, DesignMatrix, PartialLikelihood, SolverOptions, Survival};
use phfcox::cubical::{build_filtration, compute_persistence, diagrams_of, write_diagrams_csv, Construction, SubjectDiagrams};
use phfcox::fpca::{fit_fpca, select_rank};
use phfcox::imaging::{sedt3, sedt3_squared, Provenance, SignedDistanceVolume};
use phfcox::pipeline::{cmd_fit, cmd_simulate, PipelineConfig, TuningSection};
use phfcox::simulate::{
    assign_groups, calibrate_censoring_rate, generate_subjects, image_diagrams, run_simulation, simulate_survival, Group,
    HazardCoefficients, SimConfig,
};
use phfcox::surface::{PersistenceSurface, SurfaceGrid};
use phfcox::survstats::{kaplan_meier, log_rank_test, median_risk_split};
use phfcox::tuning::GridMode;
use rand::seq::SliceRandom;
use rand::Rng;
use support::{
    brute_force_sedt3_squared, finite_components, naive_cox, naive_persistence, newton_cox, random_label_volume,
    random_rows, random_survival, rng,
};

type Outcome = Result<String, String>;

fn gate(id: &str, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    let line = match &out {
        Ok(detail) => format!("[acceptance] criterion {id} PASS  {name}: {detail} ({secs:.1}s)\n"),
        Err(detail) => format!("[acceptance] criterion {id} FAIL  {name}: {detail} ({secs:.1}s)\n"),
    };
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    if let Err(detail) = out {
        panic!("criterion {id} failed: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn criterion_1_edt_oracle() {
    gate("1", "SEDT-3 squared distances equal brute force", || {
        let mut r = rng(1001);
        let start = Instant::now();
        for k in 0..20 {
            let vol = random_label_volume(&mut r, [16, 16, 16]);
            ensure(sedt3_squared(&vol).unwrap() == brute_force_sedt3_squared(&vol), || format!("volume {k} differs"))?;
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 10.0, || format!("took {secs:.1}s, limit 10s"))?;
        Ok("20/20 volumes of 16^3 match exactly".into())
    });
}

#[test]
fn criterion_2_persistence_oracle() {
    gate("2", "diagrams equal naive boundary-matrix reduction", || {
        let mut r = rng(1002);
        let start = Instant::now();
        for k in 0..20 {
            let values = (0..512).map(|_| r.random_range(-5i32..=5) as f64).collect();
            let sdv = SignedDistanceVolume::from_values([8, 8, 8], values, 1.0, Provenance::Sedt3).unwrap();
            let cx = build_filtration(&sdv, Construction::V);
            let fast = compute_persistence(&cx);
            let naive = naive_persistence(&cx);
            for d in 0..3 {
                let mut a: Vec<(f64, f64)> = fast[d].points().collect();
                let mut b = naive[d].clone();
                a.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
                b.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
                ensure(a == b, || format!("volume {k}, dimension {d} differs"))?;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 60.0, || format!("took {secs:.1}s, limit 60s"))?;
        Ok("20/20 volumes of 8^3, dimensions 0-2 match as multisets".into())
    });
}

#[test]
fn criterion_3_essential_components() {
    gate("3", "dimension-0 essential classes equal 6-connected components", || {
        let mut r = rng(1003);
        let mut total = 0;
        for k in 0..50 {
            let vol = random_label_volume(&mut r, [10, 9, 8]);
            let sdv = sedt3(&vol).unwrap();
            let d = diagrams_of(&sdv, Construction::V);
            let comps = finite_components(sdv.dims(), sdv.values());
            ensure(d[0].essential_count() == comps, || {
                format!("volume {k}: {} essential vs {comps} components", d[0].essential_count())
            })?;
            total += comps;
        }
        Ok(format!("50/50 volumes agree ({total} components in total)"))
    });
}

fn random_surfaces(seed: u64, n: usize) -> Vec<PersistenceSurface> {
    let mut r = rng(seed);
    let grid = SurfaceGrid::new((-3.0, 2.0), (0.0, 5.0), 12, 10).unwrap();
    (0..n)
        .map(|_| {
            let c: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| (r.random_range(-3.0..2.0), r.random_range(0.0..5.0), r.random_range(0.2..3.0)))
                .collect();
            PersistenceSurface {
                values: grid
                    .centers()
                    .map(|(x, y)| c.iter().map(|(a, b, h)| h * (-((x - a).powi(2) + (y - b).powi(2))).exp()).sum())
                    .collect(),
                grid: grid.clone(),
                dim: 0,
                sigma: 1.0,
            }
        })
        .collect()
}

#[test]
fn criterion_4_fpca() {
    gate("4", "FPCA reconstruction, score covariance and rank rule", || {
        let n = 20;
        let s = random_surfaces(1004, n);
        let refs: Vec<&PersistenceSurface> = s.iter().collect();
        let full = fit_fpca(&refs, 1.0 - 1e-12).unwrap();
        ensure(full.rank == full.eigenvalues.len(), || format!("rank {} is not full", full.rank))?;
        let mut worst = 0.0f64;
        for x in &s {
            let rec = full.reconstruct(&full.project_scores(x).unwrap()).unwrap();
            worst = worst.max(x.values.iter().zip(&rec.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        ensure(worst <= 1e-8, || format!("reconstruction error {worst:e}"))?;
        let model = fit_fpca(&refs, 0.9).unwrap();
        let scores: Vec<Vec<f64>> = s.iter().map(|x| model.project_scores(x).unwrap()).collect();
        let mut worst_rel = 0.0f64;
        for a in 0..model.rank {
            for b in 0..model.rank {
                let c = scores.iter().map(|v| v[a] * v[b]).sum::<f64>() / (n - 1) as f64;
                let err = if a == b { (c - model.eigenvalues[a]).abs() } else { c.abs() } / model.eigenvalues[a.max(b)];
                worst_rel = worst_rel.max(err);
            }
        }
        ensure(worst_rel <= 1e-6, || format!("score covariance off by {worst_rel:e} relative"))?;
        let r = select_rank(&[8.0, 1.0, 1.0], 0.9);
        ensure(r == 3, || format!("rank rule gave {r} for (8,1,1), C=0.9"))?;
        Ok(format!(
            "reconstruction error {worst:.1e}, score covariance error {worst_rel:.1e} (rank {}), r(8,1,1)=3",
            model.rank
        ))
    });
}

fn roles(clinical: usize, scores: usize) -> Vec<ColumnRole> {
    (0..clinical)
        .map(|i| ColumnRole::Clinical { name: format!("z{i}") })
        .chain((0..scores).map(|k| ColumnRole::Score { dim: 0, k }))
        .collect()
}

#[test]
fn criterion_5_cox_solver() {
    gate("5", "Cox solver against Newton-Raphson, gradient and lambda_max", || {
        let mut worst_nr = 0.0f64;
        let mut worst_fd = 0.0f64;
        for k in 0..10 {
            let mut r = rng(1005 + k);
            let rows = random_rows(&mut r, 50, 4);
            let surv = random_survival(&mut r, 50, k % 3 == 0);
            let design = DesignMatrix::from_rows(&rows, roles(1, 3)).unwrap();
            let prob = CoxProblem::new(&design, &surv, SolverOptions::default()).unwrap();
            let fit = prob.fit(0.0, None).unwrap();
            let oracle = newton_cox(&rows, &surv);
            worst_nr = fit.coefficients.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst_nr, f64::max);

            let beta: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            let (_, g) = phfcox::cox::neg_log_partial_likelihood(&beta, &design, &surv).unwrap();
            let f = |b: &[f64]| naive_cox(&rows, &surv, b).0;
            for j in 0..4 {
                let h = 1e-5;
                let (mut up, mut dn) = (beta.clone(), beta.clone());
                up[j] += h;
                dn[j] -= h;
                worst_fd = worst_fd.max(((f(&up) - f(&dn)) / (2.0 * h) - g[j]).abs());
            }

            let lm = prob.lambda_max();
            for l in [lm, 2.0 * lm] {
                let fit = prob.fit(l, None).unwrap();
                ensure(fit.coefficients[1..].iter().all(|&b| b == 0.0), || {
                    format!("problem {k}: penalized coefficient non-zero at lambda {l}")
                })?;
            }
        }
        ensure(worst_nr <= 1e-6, || format!("Newton-Raphson mismatch {worst_nr:e}"))?;
        ensure(worst_fd <= 1e-6, || format!("finite-difference mismatch {worst_fd:e}"))?;
        Ok(format!(
            "10 problems: NR error {worst_nr:.1e}, gradient error {worst_fd:.1e}, exact zeros at lambda_max"
        ))
    });
}

#[test]
fn criterion_6_survival_stats() {
    gate("6", "Kaplan-Meier, log-rank and median split", || {
        let sv = |t: f64, e: bool| Survival::new(t, e).unwrap();
        let a = [sv(1.0, true), sv(3.0, true), sv(5.0, false)];
        let b = [sv(2.0, true), sv(4.0, true), sv(6.0, false)];
        let km = kaplan_meier(&a).unwrap();
        let want = [(2.0 / 3.0, 2.0 / 27.0), (1.0 / 3.0, 2.0 / 27.0), (1.0 / 3.0, 2.0 / 27.0)];
        for (s, (sw, vw)) in km.steps.iter().zip(want) {
            ensure((s.survival - sw).abs() < 1e-10 && (s.variance() - vw).abs() < 1e-10, || {
                format!("KM step at {} is ({}, {})", s.time, s.survival, s.variance())
            })?;
        }
        let lr = log_rank_test(&a, &b).unwrap();
        ensure((lr.statistic - 32.0 / 433.0).abs() < 1e-10, || format!("log-rank statistic {}", lr.statistic))?;
        ensure((lr.observed_minus_expected - 4.0 / 15.0).abs() < 1e-10, || "O-E differs".into())?;
        ensure((lr.variance - 433.0 / 450.0).abs() < 1e-10, || "variance differs".into())?;
        let same = log_rank_test(&a, &a).unwrap();
        ensure(same.p_value == 1.0, || format!("identical groups give p={}", same.p_value))?;
        let mut r = rng(1006);
        let mut risks: Vec<f64> = (0..133).map(|i| i as f64 + r.random_range(0.0..0.5)).collect();
        risks.shuffle(&mut r);
        let split = median_risk_split(&risks).unwrap();
        ensure((split.high.len(), split.low.len()) == (67, 66), || {
            format!("split {}/{}", split.high.len(), split.low.len())
        })?;
        Ok(format!("hand oracles match, identical groups p=1, n=133 splits 67/66 (chi2={:.6})", lr.statistic))
    });
}

#[test]
fn criterion_7_hazard_generation() {
    gate("7", "censoring rate and hazard recovery", || {
        let h = HazardCoefficients::default();
        let mut r = rng(1007);
        let n = 100_000;
        let layout = assign_groups(n, 0.5, 0.3, &mut r);
        let base = 1.0 / 3000.0;
        let hazards: Vec<f64> = layout.iter().map(|&(g, f)| base * h.linear_predictor(g, f).exp()).collect();
        let c = calibrate_censoring_rate(&hazards, 0.15).unwrap();
        let censored = layout
            .iter()
            .filter(|&&(g, f)| !simulate_survival(h.linear_predictor(g, f), base, c, &mut r).event)
            .count();
        let rate = censored as f64 / n as f64;
        ensure((0.12..=0.18).contains(&rate), || format!("censoring rate {rate}"))?;

        let m = 5000;
        let layout = assign_groups(m, 0.5, 0.3, &mut r);
        let surv: Vec<Survival> = layout
            .iter()
            .map(|&(g, f)| simulate_survival(h.linear_predictor(g, f), base, c, &mut r))
            .collect();
        let rows: Vec<Vec<f64>> = layout
            .iter()
            .map(|&(g, f)| {
                let ind = |gg: Group, ff: bool| f64::from(u8::from(g == gg && f == ff));
                vec![ind(Group::B, true), ind(Group::B, false), ind(Group::A, true)]
            })
            .collect();
        let design = DesignMatrix::from_rows(
            &rows,
            ["b_frontal", "b_nonfrontal", "a_frontal"]
                .iter()
                .map(|s| ColumnRole::Clinical { name: s.to_string() })
                .collect(),
        )
        .unwrap();
        let fit = CoxProblem::new(&design, &surv, SolverOptions::default()).unwrap().fit(0.0, None).unwrap();
        let info = PartialLikelihood::for_design(&design, &surv)
            .unwrap()
            .evaluate(&fit.coefficients, false, true)
            .information
            .unwrap();
        let inv = invert3(&info);
        let truth = [h.b_frontal, h.b_nonfrontal, h.a_frontal];
        let mut parts = Vec::new();
        for j in 0..3 {
            let se = inv[j * 3 + j].sqrt();
            let (lo, hi) = (fit.coefficients[j] - 1.96 * se, fit.coefficients[j] + 1.96 * se);
            ensure(lo <= truth[j] && truth[j] <= hi, || {
                format!("coefficient {j}: {:.3} CI [{lo:.3}, {hi:.3}] misses {}", fit.coefficients[j], truth[j])
            })?;
            parts.push(format!("{:.3}±{:.3}", fit.coefficients[j], 1.96 * se));
        }
        Ok(format!("censoring {rate:.4} over 1e5 draws; n=5000 estimates {}", parts.join(", ")))
    });
}

fn invert3(a: &[f64]) -> Vec<f64> {
    let m = |r: usize, c: usize| a[r * 3 + c];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    let cof = |r: usize, c: usize| {
        let (r0, r1) = ([1, 0, 0][r], [2, 2, 1][r]);
        let (c0, c1) = ([1, 0, 0][c], [2, 2, 1][c]);
        let v = m(r0, c0) * m(r1, c1) - m(r0, c1) * m(r1, c0);
        if (r + c) % 2 == 0 {
            v
        } else {
            -v
        }
    };
    (0..9).map(|k| cof(k % 3, k / 3) / det).collect()
}

#[test]
fn criterion_8_simulation() {
    gate("8", "scaled simulation study", || {
        let cfg = SimConfig {
            datasets: 50,
            n: 140,
            sigma: 2.0,
            seed: 20261016,
            ..SimConfig::default()
        };
        let report = run_simulation(&cfg).map_err(|e| e.to_string())?;
        let failed = report.datasets.iter().filter(|d| d.error.is_some()).count();
        let sig = report.fraction_significant;
        let ord = report.fraction_ordered;
        let regions = report.region_effects.as_ref().ok_or("no averaged dimension-0 surface")?;
        let detail = format!(
            "(a) p<0.05 in {:.0}% (need >=70%); (b) birth<=-15 mean {:.3e}, birth in [-10,-3] mean {:.3e}, opposite signs {}; (c) ordering in {:.0}% (need >=70%); {failed} datasets errored",
            100.0 * sig,
            regions.group_a_body,
            regions.group_b_clusters,
            regions.opposite_signs,
            100.0 * ord
        );
        if sig >= 0.7 && regions.opposite_signs && ord >= 0.7 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
}

fn write_sim_cohort(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cfg = SimConfig {
        n: 40,
        seed: 99,
        ..SimConfig::default()
    };
    let subjects = generate_subjects(&cfg, 0).unwrap();
    let diagrams: Vec<SubjectDiagrams> = subjects
        .iter()
        .map(|s| SubjectDiagrams {
            subject_id: s.subject_id.clone(),
            diagrams: image_diagrams(&s.image).unwrap(),
        })
        .collect();
    let dpath = dir.join("diagrams.csv");
    write_diagrams_csv(std::fs::File::create(&dpath).unwrap(), &diagrams).unwrap();
    let mut csv = String::from("subject_id,time,event,frontal\n");
    for s in &subjects {
        let sv = s.record.survival;
        csv.push_str(&format!("{},{},{},{}\n", s.subject_id, sv.time, u8::from(sv.event), u8::from(s.frontal)));
    }
    let cpath = dir.join("clinical.csv");
    std::fs::write(&cpath, csv).unwrap();
    (dpath, cpath)
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("{} differs", name.to_string_lossy()))?;
    }
    Ok(names.len())
}

#[test]
fn criterion_9_determinism() {
    gate("9", "byte-identical fit and simulate outputs", || {
        let dir = tempfile::tempdir().unwrap();
        let (diagrams, clinical) = write_sim_cohort(dir.path());
        let fit_cfg = |out: &str| PipelineConfig {
            diagrams: Some(diagrams.clone()),
            clinical: Some(clinical.clone()),
            output: dir.path().join(out),
            seed: Some(5),
            dims: vec![0, 1],
            tuning: TuningSection {
                sigmas: vec![1.5, 2.0],
                mode: GridMode::Shared,
                ..TuningSection::default()
            },
            tuning_csv: true,
            ..PipelineConfig::default()
        };
        cmd_fit(&fit_cfg("fit_a")).map_err(|e| e.to_string())?;
        cmd_fit(&fit_cfg("fit_b")).map_err(|e| e.to_string())?;
        let nfit = same_tree(&dir.path().join("fit_a"), &dir.path().join("fit_b"))?;
        let sim = SimConfig {
            datasets: 2,
            n: 30,
            seed: 8,
            ..SimConfig::default()
        };
        cmd_simulate(&sim, &dir.path().join("sim_a")).map_err(|e| e.to_string())?;
        cmd_simulate(&sim, &dir.path().join("sim_b")).map_err(|e| e.to_string())?;
        let nsim = same_tree(&dir.path().join("sim_a"), &dir.path().join("sim_b"))?;
        Ok(format!("{nfit} fit files and {nsim} simulate files identical across runs"))
    });
}
