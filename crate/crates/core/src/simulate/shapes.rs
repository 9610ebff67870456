//! Synthetic 2D tumor masks: Group A (one large body with scattered debris) and Group B
//! (a chain of smaller bodies with surrounding fragments).
//!
//! Masks are thresholded Gaussian kernel sums of random points. Point clouds are drawn in
//! abstract units and mapped to pixels by a per-group scale; kernel bandwidths are in
//! pixels. The scales and Group B's sum multiplier were calibrated once so that mean tumor
//! areas come out near 2000 pixels for both groups, then frozen here.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryImage;

/// Thresholded kernel-sum component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    pub points: usize,
    /// Standard deviation of the point cloud, in units.
    pub spread: f64,
    /// Kernel standard deviation, in pixels.
    pub bandwidth: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupAParams {
    /// Pixels per unit.
    pub scale: f64,
    pub body: BlobParams,
    pub debris: BlobParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupBParams {
    /// Pixels per unit.
    pub scale: f64,
    pub centers: usize,
    /// Distance between neighbouring centers along the line, in pixels.
    pub spacing: f64,
    /// Standard deviation of the perpendicular and along-line jitter of centers, in pixels.
    pub jitter: f64,
    /// Multiplier applied to the raw (unnormalized) kernel sums before thresholding.
    pub multiplier: f64,
    /// Per-center body cloud.
    pub body: BlobParams,
    /// Per-center fragment cloud.
    pub fragments: BlobParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeParams {
    pub size: usize,
    pub group_a: GroupAParams,
    pub group_b: GroupBParams,
    /// Redraws allowed when a mask comes out empty or fills the image.
    pub max_retries: usize,
}

impl Default for GroupAParams {
    fn default() -> Self {
        GroupAParams {
            scale: 5.0,
            body: BlobParams {
                points: 30,
                spread: 1.25,
                bandwidth: 7.0,
                threshold: 0.0025,
            },
            debris: BlobParams {
                points: 20,
                spread: 5.0,
                bandwidth: 2.0,
                threshold: 0.02,
            },
        }
    }
}

impl Default for GroupBParams {
    fn default() -> Self {
        GroupBParams {
            scale: 5.0,
            centers: 6,
            spacing: 20.0,
            jitter: 1.0,
            multiplier: 0.1,
            body: BlobParams {
                points: 2000,
                spread: 0.4,
                bandwidth: 2.0,
                threshold: 1.0,
            },
            fragments: BlobParams {
                points: 500,
                spread: 4.8,
                bandwidth: 2.0,
                threshold: 1.0,
            },
        }
    }
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            size: 200,
            group_a: GroupAParams::default(),
            group_b: GroupBParams::default(),
            max_retries: 100,
        }
    }
}

/// Adds `weight * exp(-d^2 / (2 bw^2))` around `(px, py)` within `5 bw`.
fn splat(field: &mut [f64], size: usize, px: f64, py: f64, bw: f64, weight: f64) {
    let reach = 5.0 * bw;
    let lo = |c: f64| ((c - reach).floor().max(0.0)) as usize;
    let hi = |c: f64| ((c + reach).ceil().min(size as f64 - 1.0)).max(-1.0) as i64;
    let (x0, x1, y0, y1) = (lo(px), hi(px), lo(py), hi(py));
    if x1 < x0 as i64 || y1 < y0 as i64 {
        return;
    }
    let inv = 1.0 / (2.0 * bw * bw);
    let wx: Vec<f64> = (x0..=x1 as usize).map(|x| (-(x as f64 - px).powi(2) * inv).exp()).collect();
    for y in y0..=y1 as usize {
        let wy = weight * (-(y as f64 - py).powi(2) * inv).exp();
        let row = &mut field[y * size + x0..=y * size + x1 as usize];
        for (v, w) in row.iter_mut().zip(&wx) {
            *v += wy * w;
        }
    }
}

fn cloud<R: Rng + ?Sized>(rng: &mut R, center: (f64, f64), spread_px: f64, count: usize) -> Vec<(f64, f64)> {
    let normal = Normal::new(0.0, spread_px).expect("positive spread");
    (0..count)
        .map(|_| (center.0 + normal.sample(rng), center.1 + normal.sample(rng)))
        .collect()
}

fn threshold_into(mask: &mut [bool], field: &[f64], t: f64) {
    for (m, v) in mask.iter_mut().zip(field) {
        *m |= *v > t;
    }
}

fn center(size: usize) -> (f64, f64) {
    let c = (size as f64 - 1.0) / 2.0;
    (c, c)
}

fn group_a_once<R: Rng + ?Sized>(p: &GroupAParams, size: usize, rng: &mut R) -> Vec<bool> {
    let mut mask = vec![false; size * size];
    for blob in [&p.body, &p.debris] {
        let mut field = vec![0.0; size * size];
        let pts = cloud(rng, center(size), blob.spread * p.scale, blob.points);
        // Normalized kernel density per unit area.
        let h = blob.bandwidth / p.scale;
        let w = 1.0 / (blob.points as f64 * 2.0 * std::f64::consts::PI * h * h);
        for (x, y) in pts {
            splat(&mut field, size, x, y, blob.bandwidth, w);
        }
        threshold_into(&mut mask, &field, blob.threshold);
    }
    mask
}

/// Centers equally spaced along a random line through the image center, jittered.
fn chain_centers<R: Rng + ?Sized>(p: &GroupBParams, size: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let (cx, cy) = center(size);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let (ux, uy) = (theta.cos(), theta.sin());
    let jitter = Normal::new(0.0, p.jitter.max(f64::MIN_POSITIVE)).expect("positive jitter");
    (0..p.centers)
        .map(|k| {
            let t = (k as f64 - (p.centers as f64 - 1.0) / 2.0) * p.spacing;
            (cx + t * ux + jitter.sample(rng), cy + t * uy + jitter.sample(rng))
        })
        .collect()
}

fn group_b_once<R: Rng + ?Sized>(p: &GroupBParams, size: usize, rng: &mut R) -> Vec<bool> {
    let centers = chain_centers(p, size, rng);
    let mut mask = vec![false; size * size];
    for blob in [&p.body, &p.fragments] {
        let mut field = vec![0.0; size * size];
        for &c in &centers {
            for (x, y) in cloud(rng, c, blob.spread * p.scale, blob.points) {
                splat(&mut field, size, x, y, blob.bandwidth, p.multiplier);
            }
        }
        threshold_into(&mut mask, &field, blob.threshold);
    }
    mask
}

fn accept(size: usize, mask: Vec<bool>) -> Option<BinaryImage> {
    let area = mask.iter().filter(|&&m| m).count();
    if area == 0 || area == mask.len() {
        return None;
    }
    BinaryImage::new(size, size, mask).ok()
}

fn retry<F: FnMut() -> Vec<bool>>(params: &ShapeParams, group: &str, mut draw: F) -> Result<BinaryImage> {
    for _ in 0..=params.max_retries {
        if let Some(img) = accept(params.size, draw()) {
            return Ok(img);
        }
    }
    Err(Error::Degenerate(format!(
        "group {group} generator produced an empty or full mask {} times",
        params.max_retries + 1
    )))
}

pub fn generate_group_a<R: Rng + ?Sized>(params: &ShapeParams, rng: &mut R) -> Result<BinaryImage> {
    retry(params, "A", || group_a_once(&params.group_a, params.size, rng))
}

pub fn generate_group_b<R: Rng + ?Sized>(params: &ShapeParams, rng: &mut R) -> Result<BinaryImage> {
    retry(params, "B", || group_b_once(&params.group_b, params.size, rng))
}
