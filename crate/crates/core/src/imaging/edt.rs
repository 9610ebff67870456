//! Exact squared Euclidean distance transform, separable over axes.
//!
//! Each axis pass takes the lower envelope of the parabolas `(x - v)^2 + f(v)`
//! over sites `v`. Squared distances are integers, and the envelope breakpoints
//! are kept as exact rationals, so the result is bit-exact.

use super::Dims;

/// Marks "no feature reachable" in squared-distance arrays.
pub const SQ_INF: u64 = u64::MAX;

/// Breakpoint `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    const NEG_INF: Ratio = Ratio { num: -1, den: 0 };

    fn le(self, other: Ratio) -> bool {
        if self.den == 0 {
            return true;
        }
        if other.den == 0 {
            return false;
        }
        self.num * other.den <= other.num * self.den
    }

    /// `self < x` for an integer `x`.
    fn lt_int(self, x: i128) -> bool {
        self.den == 0 || self.num < x * self.den
    }
}

/// One-dimensional pass over `f`, writing into `out`. Scratch buffers are reused across lines.
fn envelope_1d(f: &[u64], out: &mut [u64], sites: &mut Vec<usize>, bounds: &mut Vec<Ratio>) {
    sites.clear();
    bounds.clear();
    let height = |q: usize| f[q] as i128 + (q as i128) * (q as i128);
    for q in 0..f.len() {
        if f[q] == SQ_INF {
            continue;
        }
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(Ratio::NEG_INF);
                break;
            };
            let s = Ratio {
                num: height(q) - height(v),
                den: 2 * (q as i128 - v as i128),
            };
            if s.le(*bounds.last().unwrap()) {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = SQ_INF);
        return;
    }
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1].lt_int(x as i128) {
            k += 1;
        }
        let v = sites[k];
        let dx = x.abs_diff(v) as u64;
        *o = dx * dx + f[v];
    }
}

/// Squared distance (in voxel units) from every voxel to the nearest voxel with `feature == true`.
/// Voxels outside the grid are not features. Returns [`SQ_INF`] everywhere if there is no feature.
pub fn squared_edt(feature: &[bool], dims: Dims) -> Vec<u64> {
    let n: usize = dims.iter().product();
    assert_eq!(feature.len(), n, "feature mask does not match dims");
    let mut d: Vec<u64> = feature.iter().map(|&b| if b { 0 } else { SQ_INF }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    let mut out = Vec::new();
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let stride = strides[axis];
        line.resize(len, 0);
        out.resize(len, 0);
        for start in 0..n {
            // Visit each line once, from its first voxel along `axis`.
            if (start / stride) % len != 0 {
                continue;
            }
            for i in 0..len {
                line[i] = d[start + i * stride];
            }
            envelope_1d(&line, &mut out, &mut sites, &mut bounds);
            for i in 0..len {
                d[start + i * stride] = out[i];
            }
        }
    }
    d
}
