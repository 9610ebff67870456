//! Persistence surfaces: Gaussian-smoothed diagrams weighted by the maximum distance weight,
//! rasterized at cell centers of a rectangular grid over the (birth, death) plane.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cubical::PersistenceDiagram;
use crate::error::{Error, Result};

/// Maximum distance weight `max{|b|, |d|, d - b}`.
pub fn mdw_weight(b: f64, d: f64) -> f64 {
    b.abs().max(d.abs()).max(d - b)
}

/// Gaussian kernel with bandwidth `sigma` scaling the exponent.
fn kernel_1d(t: f64, center: f64, sigma: f64) -> f64 {
    let u = (t - center) / sigma;
    (-u * u).exp()
}

/// Uniform grid over `[x_min, x_max] x [y_min, y_max]`; x is birth, y is death.
/// Values are stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SurfaceGrid {
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(x) || !ok(y) || nx < 2 || ny < 2 {
            return Err(Error::invalid(format!(
                "grid needs finite increasing bounds and at least 2x2 cells, got {x:?} x {y:?} at {nx}x{ny}"
            )));
        }
        Ok(SurfaceGrid {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            nx,
            ny,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    /// Quadrature weight of one cell.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy()
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (self.x_center(i), self.y_center(j))))
    }

    /// Bilinear interpolation of `values` at `(x, y)`, clamped to the outermost cell centers.
    /// Returns 0 outside the grid bounds.
    pub fn interpolate(&self, values: &[f64], x: f64, y: f64) -> f64 {
        if x < self.x_min || x > self.x_max || y < self.y_min || y > self.y_max {
            return 0.0;
        }
        let fx = ((x - self.x_min) / self.dx() - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((y - self.y_min) / self.dy() - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.nx - 1), (j0 + 1).min(self.ny - 1));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let v = |i: usize, j: usize| values[i + self.nx * j];
        (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0)) + ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1))
    }
}

/// Bounds from pooled diagrams: each axis spans the extreme coordinates widened by `pad * sigma`.
pub fn pooled_grid_bounds<'a>(
    diagrams: impl IntoIterator<Item = &'a PersistenceDiagram>,
    sigma: f64,
    resolution: (usize, usize),
    pad: f64,
) -> Result<SurfaceGrid> {
    let (mut bx, mut by) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for d in diagrams {
        for (b, dth) in d.points() {
            if !dth.is_finite() {
                return Err(Error::invalid("grid bounds need regularized diagrams (finite deaths)"));
            }
            bx = (bx.0.min(b), bx.1.max(b));
            by = (by.0.min(dth), by.1.max(dth));
        }
    }
    if bx.0 > bx.1 {
        return Err(Error::invalid("cannot place a surface grid: every diagram in the pool is empty"));
    }
    let w = pad * sigma;
    SurfaceGrid::new((bx.0 - w, bx.1 + w), (by.0 - w, by.1 + w), resolution.0, resolution.1)
}

/// How grids are laid out for a given bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Minimum cells per axis.
    pub resolution: usize,
    /// Bounds padding in units of sigma.
    pub pad: f64,
    /// Cap on cells per axis after refinement.
    pub max_resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 50,
            pad: 3.0,
            max_resolution: 200,
        }
    }
}

impl GridSpec {
    /// Pooled bounds, with resolution raised so each cell edge is at most `sigma / 2`
    /// (up to `max_resolution`).
    pub fn grid_for<'a>(
        &self,
        diagrams: impl IntoIterator<Item = &'a PersistenceDiagram>,
        sigma: f64,
    ) -> Result<SurfaceGrid> {
        let g = pooled_grid_bounds(diagrams, sigma, (2, 2), self.pad)?;
        let cells = |span: f64| {
            let need = (span / (sigma / 2.0)).ceil() as usize;
            need.max(self.resolution).min(self.max_resolution.max(self.resolution))
        };
        SurfaceGrid::new(
            (g.x_min, g.x_max),
            (g.y_min, g.y_max),
            cells(g.x_max - g.x_min),
            cells(g.y_max - g.y_min),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSurface {
    pub grid: SurfaceGrid,
    pub values: Vec<f64>,
    pub dim: usize,
    pub sigma: f64,
}

/// Surface value at an arbitrary point.
pub fn surface_value_at(d: &PersistenceDiagram, sigma: f64, x: f64, y: f64) -> f64 {
    d.points()
        .map(|(b, dth)| kernel_1d(x, b, sigma) * kernel_1d(y, dth, sigma) * mdw_weight(b, dth))
        .sum()
}

/// Rasterize a regularized diagram at the cell centers of `grid`.
pub fn rasterize_surface(d: &PersistenceDiagram, grid: &SurfaceGrid, sigma: f64) -> Result<PersistenceSurface> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let mut values = vec![0.0; grid.len()];
    let mut ex = vec![0.0; grid.nx];
    let mut ey = vec![0.0; grid.ny];
    for (b, dth) in d.points() {
        if !dth.is_finite() {
            return Err(Error::invalid("rasterize_surface needs a regularized diagram"));
        }
        let w = mdw_weight(b, dth);
        if w == 0.0 {
            continue;
        }
        for (i, e) in ex.iter_mut().enumerate() {
            *e = kernel_1d(grid.x_center(i), b, sigma);
        }
        for (j, e) in ey.iter_mut().enumerate() {
            *e = w * kernel_1d(grid.y_center(j), dth, sigma);
        }
        for (j, &wy) in ey.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let row = &mut values[j * grid.nx..(j + 1) * grid.nx];
            for (v, &wx) in row.iter_mut().zip(&ex) {
                *v += wx * wy;
            }
        }
    }
    Ok(PersistenceSurface {
        grid: grid.clone(),
        values,
        dim: d.dim,
        sigma,
    })
}

/// Write `subject_id,dim,x,y,value` rows.
pub fn write_surfaces_csv<W: Write>(out: W, surfaces: &[(String, PersistenceSurface)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(["subject_id", "dim", "x", "y", "value"]).map_err(map)?;
    for (subject, s) in surfaces {
        for ((x, y), v) in s.grid.centers().zip(&s.values) {
            w.write_record([subject.clone(), s.dim.to_string(), x.to_string(), y.to_string(), v.to_string()])
                .map_err(map)?;
        }
    }
    w.flush().map_err(|e| Error::io("<surface csv>", e))
}
