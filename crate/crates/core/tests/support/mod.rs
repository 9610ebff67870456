//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use phfcox::cubical::FilteredCubicalComplex;
use phfcox::imaging::{Label, LabelVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random three-class volume with spatially correlated labels and at least one tumor voxel.
pub fn random_label_volume(r: &mut ChaCha8Rng, dims: [usize; 3]) -> LabelVolume {
    let n = dims.iter().product::<usize>();
    loop {
        let blob = [r.random_range(0..dims[0]), r.random_range(0..dims[1]), r.random_range(0..dims[2])];
        let radius = r.random_range(2.0..(dims[0] as f64));
        let mut v = Vec::with_capacity(n);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let d = ((x as f64 - blob[0] as f64).powi(2)
                        + (y as f64 - blob[1] as f64).powi(2)
                        + (z as f64 - blob[2] as f64).powi(2))
                    .sqrt();
                    let u: f64 = r.random();
                    let l = if d > radius && u < 0.9 {
                        Label::NonTumor
                    } else if u < 0.45 {
                        Label::AT
                    } else if u < 0.95 {
                        Label::NonAT
                    } else {
                        Label::NonTumor
                    };
                    v.push(l);
                }
            }
        }
        let has = |l| v.contains(&l);
        if has(Label::AT) && has(Label::NonAT) {
            return LabelVolume::new(dims, v, 1.0).unwrap();
        }
    }
}

/// O(n^2) scan: signed squared distance to the nearest voxel of a different label.
pub fn brute_force_sedt3_squared(vol: &LabelVolume) -> Vec<i64> {
    let [nx, ny, _] = vol.dims();
    let v = vol.voxels();
    let coord = |i: usize| [i % nx, (i / nx) % ny, i / (nx * ny)];
    (0..v.len())
        .map(|i| {
            if v[i] == Label::NonTumor {
                return i64::MAX;
            }
            let a = coord(i);
            let best = (0..v.len())
                .filter(|&j| v[j] != v[i])
                .map(|j| {
                    let b = coord(j);
                    (0..3).map(|k| (a[k] as i64 - b[k] as i64).pow(2)).sum::<i64>()
                })
                .min()
                .expect("a different label exists");
            if v[i] == Label::AT {
                -best
            } else {
                best
            }
        })
        .collect()
}

/// Standard left-to-right boundary matrix reduction over Z/2 on the finite cells,
/// with no clearing, twist or duality. Returns sorted (birth, death) lists per dimension,
/// zero-persistence pairs removed.
pub fn naive_persistence(cx: &FilteredCubicalComplex) -> [Vec<(f64, f64)>; 3] {
    let mut cells: Vec<usize> = (0..cx.len()).filter(|&c| cx.value(c).is_finite()).collect();
    cells.sort_by(|&a, &b| {
        cx.value(a)
            .total_cmp(&cx.value(b))
            .then(cx.dim(a).cmp(&cx.dim(b)))
            .then(a.cmp(&b))
    });
    let mut pos = std::collections::HashMap::new();
    for (i, &c) in cells.iter().enumerate() {
        pos.insert(c, i);
    }
    let mut cols: Vec<Vec<usize>> = cells
        .iter()
        .map(|&c| {
            let mut col: Vec<usize> = cx.boundary(c).map(|f| pos[&f]).collect();
            col.sort_unstable();
            col
        })
        .collect();
    let mut low_owner: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut paired = vec![false; cells.len()];
    let mut out: [Vec<(f64, f64)>; 3] = [vec![], vec![], vec![]];
    for j in 0..cells.len() {
        loop {
            let Some(&low) = cols[j].last() else { break };
            let Some(&k) = low_owner.get(&low) else { break };
            let other = cols[k].clone();
            let mut merged: Vec<usize> = cols[j].iter().copied().filter(|x| !other.contains(x)).collect();
            merged.extend(other.iter().copied().filter(|x| !cols[j].contains(x)));
            merged.sort_unstable();
            cols[j] = merged;
        }
        if let Some(&low) = cols[j].last() {
            low_owner.insert(low, j);
            paired[low] = true;
            paired[j] = true;
            let d = cx.dim(cells[low]);
            let (b, dth) = (cx.value(cells[low]), cx.value(cells[j]));
            if d < 3 && b < dth {
                out[d].push((b, dth));
            }
        }
    }
    for (i, &c) in cells.iter().enumerate() {
        if !paired[i] && cols[i].is_empty() {
            let d = cx.dim(c);
            if d < 3 {
                out[d].push((cx.value(c), f64::INFINITY));
            }
        }
    }
    for d in &mut out {
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    out
}

/// Number of 6-connected components among finite voxels.
pub fn finite_components(dims: [usize; 3], values: &[f64]) -> usize {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = idx(x, y, z);
                if !values[i].is_finite() {
                    continue;
                }
                for j in [
                    (x + 1 < dims[0]).then(|| idx(x + 1, y, z)),
                    (y + 1 < dims[1]).then(|| idx(x, y + 1, z)),
                    (z + 1 < dims[2]).then(|| idx(x, y, z + 1)),
                ]
                .into_iter()
                .flatten()
                {
                    if values[j].is_finite() {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        parent[a] = b;
                    }
                }
            }
        }
    }
    (0..n).filter(|&i| values[i].is_finite() && find(&mut parent, i) == i).count()
}

/// Bottleneck distance by exhaustive search over thresholds with augmenting-path matching.
/// Essential points are matched among themselves by birth; finite points may go to the diagonal.
pub fn bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let ess = |d: &[(f64, f64)]| {
        let mut e: Vec<f64> = d.iter().filter(|p| p.1.is_infinite()).map(|p| p.0).collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let (ea, eb) = (ess(a), ess(b));
    if ea.len() != eb.len() {
        return f64::INFINITY;
    }
    let ess_cost = ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let fa: Vec<(f64, f64)> = a.iter().copied().filter(|p| p.1.is_finite()).collect();
    let fb: Vec<(f64, f64)> = b.iter().copied().filter(|p| p.1.is_finite()).collect();
    let (m, n) = (fa.len(), fb.len());
    let diag = |p: (f64, f64)| (p.1 - p.0) / 2.0;
    let linf = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs().max((p.1 - q.1).abs());
    // Left: fa points then n diagonal slots; right: fb points then m diagonal slots.
    let cost = |i: usize, j: usize| -> f64 {
        match (i < m, j < n) {
            (true, true) => linf(fa[i], fb[j]),
            (true, false) => diag(fa[i]),
            (false, true) => diag(fb[j]),
            (false, false) => 0.0,
        }
    };
    let size = m + n;
    let mut candidates: Vec<f64> = vec![0.0];
    for i in 0..size {
        for j in 0..size {
            candidates.push(cost(i, j));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let feasible = |eps: f64| -> bool {
        let mut match_r: Vec<Option<usize>> = vec![None; size];
        fn augment(
            i: usize,
            eps: f64,
            size: usize,
            cost: &dyn Fn(usize, usize) -> f64,
            seen: &mut Vec<bool>,
            match_r: &mut Vec<Option<usize>>,
        ) -> bool {
            for j in 0..size {
                if cost(i, j) <= eps && !seen[j] {
                    seen[j] = true;
                    if match_r[j].is_none() || augment(match_r[j].unwrap(), eps, size, cost, seen, match_r) {
                        match_r[j] = Some(i);
                        return true;
                    }
                }
            }
            false
        }
        (0..size).all(|i| {
            let mut seen = vec![false; size];
            augment(i, eps, size, &cost, &mut seen, &mut match_r)
        })
    };
    let finite_cost = candidates.into_iter().find(|&e| feasible(e)).unwrap_or(f64::INFINITY);
    finite_cost.max(ess_cost)
}

/// Random survival data; with `ties` the times are rounded to a coarse grid.
pub fn random_survival(r: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<phfcox::cox::Survival> {
    (0..n)
        .map(|_| {
            let t: f64 = r.random_range(0.1..10.0);
            let t = if ties { t.ceil() } else { t };
            phfcox::cox::Survival::new(t, r.random_range(0.0..1.0) < 0.7).unwrap()
        })
        .collect()
}

pub fn random_rows(r: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

/// `-(1/n) log PL` (Breslow) with its gradient and Hessian, summing over each event's
/// risk set directly.
pub fn naive_cox(rows: &[Vec<f64>], surv: &[phfcox::cox::Survival], beta: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let p = beta.len();
    let eta: Vec<f64> = rows.iter().map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut f = 0.0;
    let mut g = vec![0.0; p];
    let mut h = vec![vec![0.0; p]; p];
    for i in 0..n {
        if !surv[i].event {
            continue;
        }
        let risk: Vec<usize> = (0..n).filter(|&j| surv[j].time >= surv[i].time).collect();
        let s0: f64 = risk.iter().map(|&j| eta[j].exp()).sum();
        let s1: Vec<f64> = (0..p).map(|a| risk.iter().map(|&j| eta[j].exp() * rows[j][a]).sum()).collect();
        f -= eta[i] - s0.ln();
        for a in 0..p {
            g[a] -= rows[i][a] - s1[a] / s0;
            for b in 0..p {
                let s2: f64 = risk.iter().map(|&j| eta[j].exp() * rows[j][a] * rows[j][b]).sum();
                h[a][b] += s2 / s0 - s1[a] * s1[b] / s0 / s0;
            }
        }
    }
    let k = 1.0 / n as f64;
    (f * k, g.iter().map(|v| v * k).collect(), h.iter().map(|r| r.iter().map(|v| v * k).collect()).collect())
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// Unpenalized Cox fit by damped Newton-Raphson.
pub fn newton_cox(rows: &[Vec<f64>], surv: &[phfcox::cox::Survival]) -> Vec<f64> {
    let p = rows[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let (f, g, h) = naive_cox(rows, surv, &beta);
        let step = solve(&h, &g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            if naive_cox(rows, surv, &cand).0 <= f || t < 1e-10 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max) < 1e-12 {
            break;
        }
    }
    beta
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns eigenvalues sorted
/// non-increasing and the matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect();
    (values, vectors)
}
