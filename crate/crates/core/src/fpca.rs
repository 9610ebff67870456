//! Functional principal component analysis of persistence surfaces.
//!
//! Eigenpairs of the covariance operator (midpoint quadrature, denominator `n - 1`) are
//! obtained from the `n x n` weighted Gram matrix of centered surfaces, so the grid-sized
//! covariance is never formed.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{PersistenceSurface, SurfaceGrid};

/// Gram eigenvalues below this fraction of the largest are treated as zero.
const RELATIVE_EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub dim: usize,
    /// Bandwidth of the surfaces the model was fitted to.
    pub sigma: f64,
    pub grid: SurfaceGrid,
    pub mean: Vec<f64>,
    /// Non-zero covariance eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// The leading `rank` eigenfunctions, each stored on the grid.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub rank: usize,
    pub threshold: f64,
}

/// Smallest `r` whose proportion of explained variance strictly exceeds `c`.
/// Returns 0 when the total variance is zero.
pub fn select_rank(eigenvalues: &[f64], c: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (k, &l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total > c {
            return k + 1;
        }
    }
    // Rounding can leave the full sum a hair below `c * total` when `c` is close to 1.
    eigenvalues.iter().filter(|&&l| l > 0.0).count()
}

fn check_threshold(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("variance threshold must lie in (0, 1), got {c}")));
    }
    Ok(())
}

/// Eigen-decomposition of a centered Gram matrix. Returns `(mu_k, v_k)` for the
/// numerically non-zero eigenvalues, sorted non-increasing.
fn gram_eigen(g: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let n = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order.first().map_or(0.0, |&k| eig.eigenvalues[k].max(0.0));
    order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > top * RELATIVE_EIGEN_TOL && eig.eigenvalues[k] > 0.0)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
        .collect()
}

/// Double-center the rows/columns of `g` restricted to `idx`.
fn centered_submatrix(g: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let n = idx.len();
    let row_mean: Vec<f64> = idx.iter().map(|&i| idx.iter().map(|&j| g[(i, j)]).sum::<f64>() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |a, b| g[(idx[a], idx[b])] - row_mean[a] - row_mean[b] + all_mean)
}

/// Fit FPCA to surfaces that share one grid. `c` is the variance threshold for the rank rule.
pub fn fit_fpca(surfaces: &[&PersistenceSurface], c: f64) -> Result<FpcaModel> {
    check_threshold(c)?;
    let n = surfaces.len();
    if n < 2 {
        return Err(Error::invalid(format!("FPCA needs at least 2 surfaces, got {n}")));
    }
    let grid = &surfaces[0].grid;
    if surfaces
        .iter()
        .any(|s| s.grid != *grid || s.dim != surfaces[0].dim || s.sigma != surfaces[0].sigma)
    {
        return Err(Error::invalid(
            "FPCA surfaces must share one grid, bandwidth and homology dimension",
        ));
    }
    let m = grid.len();
    let area = grid.cell_area();
    let mut mean = vec![0.0; m];
    for s in surfaces {
        for (a, v) in mean.iter_mut().zip(&s.values) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let centered: Vec<Vec<f64>> = surfaces
        .iter()
        .map(|s| s.values.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let g = DMatrix::from_fn(n, n, |i, j| area * dot(&centered[i], &centered[j]));
    let pairs = gram_eigen(g);
    let eigenvalues: Vec<f64> = pairs.iter().map(|(mu, _)| mu / (n - 1) as f64).collect();
    let rank = select_rank(&eigenvalues, c);
    if rank == 0 {
        log::warn!("FPCA for dimension {}: surfaces have zero variance, rank 0", surfaces[0].dim);
    }
    let eigenfunctions = pairs[..rank]
        .iter()
        .map(|(mu, v)| {
            let mut phi = vec![0.0; m];
            for (vi, yi) in v.iter().zip(&centered) {
                for (p, y) in phi.iter_mut().zip(yi) {
                    *p += vi * y;
                }
            }
            let s = mu.sqrt();
            phi.iter_mut().for_each(|p| *p /= s);
            fix_sign(&mut phi);
            phi
        })
        .collect();
    Ok(FpcaModel {
        dim: surfaces[0].dim,
        sigma: surfaces[0].sigma,
        grid: grid.clone(),
        mean,
        eigenvalues,
        eigenfunctions,
        rank,
        threshold: c,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flip so the entry of largest magnitude (first on ties) is positive.
fn fix_sign(phi: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &p in phi.iter() {
        if p.abs() > best {
            best = p.abs();
            sign = p.signum();
        }
    }
    if sign < 0.0 {
        phi.iter_mut().for_each(|p| *p = -*p);
    }
}

impl FpcaModel {
    /// Sum of all covariance eigenvalues.
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Proportion of variance explained by the first `r` components.
    pub fn proportion_explained(&self, r: usize) -> f64 {
        let t = self.total_variance();
        if t == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(r).sum::<f64>() / t
    }

    pub fn project_scores(&self, surface: &PersistenceSurface) -> Result<Vec<f64>> {
        if surface.grid != self.grid {
            return Err(Error::invalid(format!(
                "surface grid does not match the FPCA grid for dimension {}",
                self.dim
            )));
        }
        let area = self.grid.cell_area();
        let centered: Vec<f64> = surface.values.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self.eigenfunctions.iter().map(|phi| area * dot(&centered, phi)).collect())
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Result<PersistenceSurface> {
        if scores.len() != self.rank {
            return Err(Error::invalid(format!(
                "expected {} scores, got {}",
                self.rank,
                scores.len()
            )));
        }
        let mut values = self.expand(scores);
        values.iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        Ok(PersistenceSurface {
            grid: self.grid.clone(),
            values,
            dim: self.dim,
            sigma: self.sigma,
        })
    }

    /// `sum_k coef_k phi_k` on the grid (no mean).
    pub fn expand(&self, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, phi) in coef.iter().zip(&self.eigenfunctions) {
            if *c != 0.0 {
                out.iter_mut().zip(phi).for_each(|(o, p)| *o += c * p);
            }
        }
        out
    }
}

/// Scores of a fold fitted from a raw (uncentered) Gram matrix `g[i][j] = area * <X_i, X_j>`.
#[derive(Debug, Clone)]
pub struct GramFold {
    pub rank: usize,
    /// Training scores, one row per training subject in the order given.
    pub train_scores: Vec<Vec<f64>>,
    pub test_scores: Vec<Vec<f64>>,
}

/// FPCA restricted to `train`, with held-out subjects in `test` projected onto the fitted
/// components. Equivalent to [`fit_fpca`] on the training surfaces up to component signs,
/// which do not affect downstream risks.
pub fn fpca_from_gram(g: &DMatrix<f64>, train: &[usize], test: &[usize], c: f64) -> Result<GramFold> {
    check_threshold(c)?;
    let n = train.len();
    if n < 2 {
        return Err(Error::invalid(format!("FPCA needs at least 2 surfaces, got {n}")));
    }
    let gc = centered_submatrix(g, train);
    let pairs = gram_eigen(gc.clone());
    let eigenvalues: Vec<f64> = pairs.iter().map(|(mu, _)| mu / (n - 1) as f64).collect();
    let rank = select_rank(&eigenvalues, c);
    let pairs = &pairs[..rank];
    let train_scores = (0..n)
        .map(|i| pairs.iter().map(|(mu, v)| mu.sqrt() * v[i]).collect())
        .collect();
    let row_mean: Vec<f64> = train.iter().map(|&i| train.iter().map(|&j| g[(i, j)]).sum::<f64>() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    let test_scores = test
        .iter()
        .map(|&t| {
            let t_mean = train.iter().map(|&j| g[(t, j)]).sum::<f64>() / n as f64;
            // Inner products of the centered test surface with each centered training surface.
            let cross: Vec<f64> = train
                .iter()
                .enumerate()
                .map(|(a, &i)| g[(t, i)] - t_mean - row_mean[a] + all_mean)
                .collect();
            pairs.iter().map(|(mu, v)| dot(&cross, v) / mu.sqrt()).collect()
        })
        .collect();
    Ok(GramFold {
        rank,
        train_scores,
        test_scores,
    })
}

/// Raw Gram matrix `area * <X_i, X_j>` of surfaces on one grid.
pub fn raw_gram(surfaces: &[&PersistenceSurface]) -> DMatrix<f64> {
    let n = surfaces.len();
    let area = surfaces.first().map_or(1.0, |s| s.grid.cell_area());
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = area * dot(&surfaces[i].values, &surfaces[j].values);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}
