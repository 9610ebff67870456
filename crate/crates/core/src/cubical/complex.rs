use serde::{Deserialize, Serialize};

use crate::imaging::SignedDistanceVolume;

/// How voxel values become cell values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// Voxels are vertices; a cube takes the maximum over its vertices.
    #[default]
    V,
    /// Voxels are top-dimensional cubes; a face takes the minimum over its cofaces.
    T,
}

/// Cubical complex on a doubled grid. A cell's dimension is the number of its odd
/// coordinates; excluded cells carry `f64::INFINITY` and never enter a sublevel set.
#[derive(Debug, Clone)]
pub struct FilteredCubicalComplex {
    shape: [usize; 3],
    values: Vec<f64>,
    construction: Construction,
}

impl FilteredCubicalComplex {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// Number of cells in the doubled grid, finite or not.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coords(&self, cell: usize) -> [usize; 3] {
        let [sx, sy, _] = self.shape;
        [cell % sx, (cell / sx) % sy, cell / (sx * sy)]
    }

    pub fn cell_at(&self, c: [usize; 3]) -> usize {
        c[0] + self.shape[0] * (c[1] + self.shape[1] * c[2])
    }

    pub fn dim(&self, cell: usize) -> usize {
        self.coords(cell).iter().filter(|&&c| c % 2 == 1).count()
    }

    /// Highest cell dimension present: the number of axes with more than one cell.
    pub fn top_dim(&self) -> usize {
        self.shape.iter().filter(|&&s| s > 1).count()
    }

    /// Codimension-one faces, two per odd coordinate.
    pub fn boundary(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(cell);
        let strides = [1, self.shape[0], self.shape[0] * self.shape[1]];
        (0..3)
            .filter(move |&a| c[a] % 2 == 1)
            .flat_map(move |a| [cell - strides[a], cell + strides[a]])
    }

    /// Finite cells of dimension `dim`, in grid order.
    pub fn cells(&self, dim: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&c| self.values[c].is_finite() && self.dim(c) == dim)
    }

    pub fn num_cells(&self, dim: usize) -> usize {
        self.cells(dim).count()
    }

    /// Euler characteristic of the sublevel complex at `eps`.
    pub fn euler_characteristic(&self, eps: f64) -> i64 {
        (0..self.values.len())
            .filter(|&c| self.values[c] <= eps)
            .map(|c| if self.dim(c) % 2 == 0 { 1 } else { -1 })
            .sum()
    }
}

fn doubled(n: usize, construction: Construction) -> usize {
    match construction {
        Construction::V => 2 * n - 1,
        Construction::T if n == 1 => 1,
        Construction::T => 2 * n + 1,
    }
}

/// Build the filtered complex of a signed distance volume.
pub fn build_filtration(sdv: &SignedDistanceVolume, construction: Construction) -> FilteredCubicalComplex {
    let dims = sdv.dims();
    let shape = dims.map(|n| doubled(n, construction));
    let strides = [1, shape[0], shape[0] * shape[1]];
    let total = shape.iter().product();
    let mut values = vec![f64::NAN; total];

    // Seed voxel cells. A flat axis (one voxel) keeps coordinate 0 under either construction.
    let seat = |n: usize, i: usize| match construction {
        Construction::V => 2 * i,
        Construction::T if n == 1 => 0,
        Construction::T => 2 * i + 1,
    };
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let v = sdv.get(x, y, z);
                // Normalize -0.0 so ordering by value is unambiguous.
                let v = if v == 0.0 { 0.0 } else { v };
                let c = seat(dims[0], x) * strides[0] + seat(dims[1], y) * strides[1] + seat(dims[2], z) * strides[2];
                values[c] = v;
            }
        }
    }

    // Fill remaining cells one axis at a time from their neighbors along that axis.
    // V: cells with an odd coordinate take the max of the two even neighbors.
    // T: cells with an even coordinate take the min of the existing odd neighbors.
    for axis in 0..3 {
        if shape[axis] == 1 {
            continue;
        }
        for cell in 0..total {
            let c = [cell % shape[0], (cell / shape[0]) % shape[1], cell / (shape[0] * shape[1])];
            let pending = match construction {
                Construction::V => c[axis] % 2 == 1 && values[cell].is_nan(),
                Construction::T => c[axis] % 2 == 0 && values[cell].is_nan(),
            };
            if !pending {
                continue;
            }
            let lo = (c[axis] > 0).then(|| values[cell - strides[axis]]);
            let hi = (c[axis] + 1 < shape[axis]).then(|| values[cell + strides[axis]]);
            let v = match construction {
                Construction::V => combine(lo, hi, f64::max),
                Construction::T => combine(lo, hi, f64::min),
            };
            values[cell] = v;
        }
    }
    debug_assert!(values.iter().all(|v| !v.is_nan()));
    FilteredCubicalComplex {
        shape,
        values,
        construction,
    }
}

/// Both neighbors along an axis share their other coordinates, so they are either both
/// filled or both still NaN; NaN results are filled by a later axis sweep.
fn combine(lo: Option<f64>, hi: Option<f64>, f: fn(f64, f64) -> f64) -> f64 {
    match (lo.filter(|v| !v.is_nan()), hi.filter(|v| !v.is_nan())) {
        (Some(a), Some(b)) => f(a, b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Provenance;

    fn sdv(dims: [usize; 3], values: Vec<f64>) -> SignedDistanceVolume {
        SignedDistanceVolume::from_values(dims, values, 1.0, Provenance::Sedt3).unwrap()
    }

    #[test]
    fn edge_takes_max() {
        let cx = build_filtration(&sdv([1, 1, 2], vec![-1.0, 1.0]), Construction::V);
        assert_eq!(cx.num_cells(0), 2);
        assert_eq!(cx.num_cells(1), 1);
        let e = cx.cells(1).next().unwrap();
        assert_eq!(cx.value(e), 1.0);
    }

    #[test]
    fn single_cube_counts() {
        let cx = build_filtration(&sdv([2, 2, 2], (0..8).map(|i| i as f64 - 4.0).collect()), Construction::V);
        assert_eq!([0, 1, 2, 3].map(|d| cx.num_cells(d)), [8, 12, 6, 1]);
        assert_eq!(cx.euler_characteristic(f64::MAX), 1);
    }

    #[test]
    fn infinite_vertex_poisons_cofaces() {
        let mut v = vec![-1.0; 8];
        v[0] = f64::INFINITY;
        let cx = build_filtration(&sdv([2, 2, 2], v), Construction::V);
        assert_eq!([0, 1, 2, 3].map(|d| cx.num_cells(d)), [7, 9, 3, 0]);
    }

    #[test]
    fn monotone_filtration() {
        let vals: Vec<f64> = (0..27).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        for construction in [Construction::V, Construction::T] {
            let cx = build_filtration(&sdv([3, 3, 3], vals.clone()), construction);
            for c in 0..cx.len() {
                for f in cx.boundary(c) {
                    assert!(cx.value(c) >= cx.value(f), "{construction:?} cell {c}");
                }
            }
        }
    }

    #[test]
    fn t_construction_of_single_pixel() {
        let cx = build_filtration(&sdv([1, 1, 1], vec![-2.0]), Construction::T);
        assert_eq!(cx.shape(), [1, 1, 1]);
        let cx = build_filtration(&sdv([2, 1, 1], vec![-2.0, 3.0]), Construction::T);
        // Two unit segments sharing a vertex: vertices -2, -2, 3 and edges -2, 3.
        assert_eq!(cx.values(), &[-2.0, -2.0, -2.0, 3.0, 3.0]);
    }
}
