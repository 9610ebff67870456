mod support;

use phfcox::fpca::{fit_fpca, fpca_from_gram, raw_gram, select_rank, FpcaModel};
use phfcox::surface::{PersistenceSurface, SurfaceGrid};
use proptest::prelude::*;
use rand::Rng;
use support::{jacobi_eigen, rng};

/// Random smooth-ish surfaces on a `nx x ny` grid: a few random bumps each.
fn surfaces(seed: u64, n: usize, nx: usize, ny: usize) -> Vec<PersistenceSurface> {
    let mut r = rng(seed);
    let grid = SurfaceGrid::new((-2.0, 3.0), (0.0, 4.0), nx, ny).unwrap();
    (0..n)
        .map(|_| {
            let bumps: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| (r.random_range(-2.0..3.0), r.random_range(0.0..4.0), r.random_range(0.1..2.0)))
                .collect();
            let values = grid
                .centers()
                .map(|(x, y)| bumps.iter().map(|(bx, by, h)| h * (-((x - bx).powi(2) + (y - by).powi(2))).exp()).sum())
                .collect();
            PersistenceSurface {
                grid: grid.clone(),
                values,
                dim: 0,
                sigma: 1.0,
            }
        })
        .collect()
}

fn fit(s: &[PersistenceSurface], c: f64) -> FpcaModel {
    fit_fpca(&s.iter().collect::<Vec<_>>(), c).unwrap()
}

fn centered(s: &[PersistenceSurface], mean: &[f64]) -> Vec<Vec<f64>> {
    s.iter().map(|x| x.values.iter().zip(mean).map(|(v, m)| v - m).collect()).collect()
}

/// Eigenpairs of the discretized covariance operator `area / (n-1) * sum_i y_i y_i^T`
/// on the grid, computed directly by Jacobi rotations.
#[test]
fn matches_grid_covariance_eigen_decomposition() {
    let (n, nx, ny) = (9, 6, 5);
    let s = surfaces(1, n, nx, ny);
    let model = fit(&s, 0.999_999);
    let area = s[0].grid.cell_area();
    let y = centered(&s, &model.mean);
    let m = nx * ny;
    let cov: Vec<Vec<f64>> = (0..m)
        .map(|a| (0..m).map(|b| area / (n - 1) as f64 * y.iter().map(|yi| yi[a] * yi[b]).sum::<f64>()).collect())
        .collect();
    let (vals, vecs) = jacobi_eigen(&cov);
    assert_eq!(model.eigenvalues.len(), n - 1);
    for k in 0..n - 1 {
        assert!((model.eigenvalues[k] - vals[k]).abs() <= 1e-9 * vals[0], "eigenvalue {k}");
    }
    assert!(vals[n - 1].abs() <= 1e-9 * vals[0]);
    for k in 0..model.rank {
        // Unit vectors in R^m become L2(du)-normalized functions after dividing by sqrt(area).
        let oracle: Vec<f64> = vecs[k].iter().map(|v| v / area.sqrt()).collect();
        let sign = if oracle.iter().zip(&model.eigenfunctions[k]).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for (a, b) in oracle.iter().zip(&model.eigenfunctions[k]) {
            assert!((sign * a - b).abs() < 1e-6, "eigenfunction {k}");
        }
    }
}

#[test]
fn full_rank_reconstruction_is_exact() {
    let s = surfaces(2, 12, 10, 8);
    let model = fit(&s, 0.999_999_999);
    assert_eq!(model.rank, model.eigenvalues.len());
    for x in &s {
        let rec = model.reconstruct(&model.project_scores(x).unwrap()).unwrap();
        let err = x.values.iter().zip(&rec.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "reconstruction error {err}");
    }
}

#[test]
fn score_covariance_is_diagonal_with_eigenvalues() {
    let n = 15;
    let s = surfaces(3, n, 12, 9);
    let model = fit(&s, 0.95);
    let scores: Vec<Vec<f64>> = s.iter().map(|x| model.project_scores(x).unwrap()).collect();
    for a in 0..model.rank {
        for b in 0..model.rank {
            let c = scores.iter().map(|v| v[a] * v[b]).sum::<f64>() / (n - 1) as f64;
            if a == b {
                assert!((c - model.eigenvalues[a]).abs() <= 1e-6 * model.eigenvalues[a]);
            } else {
                assert!(c.abs() <= 1e-6 * model.eigenvalues[0]);
            }
        }
    }
    // Scores are centered.
    for a in 0..model.rank {
        assert!(scores.iter().map(|v| v[a]).sum::<f64>().abs() < 1e-9);
    }
}

#[test]
fn total_variance_and_truncation_energy() {
    let n = 10;
    let s = surfaces(4, n, 8, 8);
    let model = fit(&s, 0.8);
    let area = s[0].grid.cell_area();
    let y = centered(&s, &model.mean);
    let total: f64 = y.iter().map(|yi| area * yi.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / (n - 1) as f64;
    assert!((model.total_variance() - total).abs() <= 1e-10 * total);
    // Mean squared truncation error (denominator n-1) equals the discarded eigenvalues.
    let tail: f64 = model.eigenvalues[model.rank..].iter().sum();
    let err: f64 = s
        .iter()
        .map(|x| {
            let rec = model.reconstruct(&model.project_scores(x).unwrap()).unwrap();
            area * x.values.iter().zip(&rec.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / (n - 1) as f64;
    assert!((err - tail).abs() <= 1e-9 * total);
    assert!(err <= (1.0 - 0.8) * total + 1e-12);
}

#[test]
fn rank_rule_uses_strict_inequality() {
    assert_eq!(select_rank(&[8.0, 1.0, 1.0], 0.9), 3);
    assert_eq!(select_rank(&[8.0, 1.0, 1.0], 0.85), 2);
    assert_eq!(select_rank(&[8.0, 1.0, 1.0], 0.5), 1);
    assert_eq!(select_rank(&[0.0, 0.0], 0.9), 0);
}

/// Held-out projection from the Gram route equals projection with a model fitted on
/// the training surfaces alone.
#[test]
fn gram_folds_match_direct_fits() {
    let s = surfaces(5, 11, 7, 6);
    let refs: Vec<&PersistenceSurface> = s.iter().collect();
    let g = raw_gram(&refs);
    let test = [4usize];
    let train: Vec<usize> = (0..11).filter(|i| *i != 4).collect();
    let fold = fpca_from_gram(&g, &train, &test, 0.9).unwrap();
    let direct = fit_fpca(&train.iter().map(|&i| &s[i]).collect::<Vec<_>>(), 0.9).unwrap();
    assert_eq!(fold.rank, direct.rank);
    for (k, &i) in train.iter().enumerate() {
        let d = direct.project_scores(&s[i]).unwrap();
        for (a, b) in fold.train_scores[k].iter().zip(&d) {
            assert!((a.abs() - b.abs()).abs() < 1e-8);
        }
    }
    let d = direct.project_scores(&s[4]).unwrap();
    let signs: Vec<f64> = fold.train_scores[0].iter().zip(&direct.project_scores(&s[train[0]]).unwrap()).map(|(a, b)| (a * b).signum()).collect();
    for ((a, b), sg) in fold.test_scores[0].iter().zip(&d).zip(&signs) {
        assert!((a - sg * b).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explained_variance_is_monotone(seed in 0u64..500, c in 0.1f64..0.99) {
        let s = surfaces(seed, 6, 5, 5);
        let model = fit(&s, c);
        prop_assert!(model.proportion_explained(model.rank) > c);
        if model.rank > 0 {
            prop_assert!(model.proportion_explained(model.rank - 1) <= c);
        }
        for w in model.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigenfunction_signs_are_fixed(seed in 0u64..500) {
        let s = surfaces(seed, 6, 5, 5);
        let model = fit(&s, 0.9);
        for phi in &model.eigenfunctions {
            let big = phi.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            prop_assert!(big > 0.0);
        }
    }
}
