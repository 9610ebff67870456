use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::edt::{squared_edt, SQ_INF};
use super::{Dims, Label, LabelVolume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Sedt3,
    Sedt2,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Sedt3 => "SEDT3",
            Provenance::Sedt2 => "SEDT2",
        }
    }
}

/// Signed distances on a voxel grid; non-tumor voxels of a SEDT-3 carry `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceVolume {
    dims: Dims,
    values: Vec<f64>,
    spacing: f64,
    provenance: Provenance,
    pub subject_id: String,
}

impl SignedDistanceVolume {
    /// Build from raw values. `values` must be x-fastest, without NaN and without `-inf`.
    pub fn from_values(dims: Dims, values: Vec<f64>, spacing: f64, provenance: Provenance) -> Result<Self> {
        if dims.contains(&0) || values.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid(format!("{} values do not fill dims {dims:?}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return Err(Error::invalid(format!("signed distance value {v} is not allowed")));
        }
        Ok(SignedDistanceVolume {
            dims,
            values,
            spacing,
            provenance,
            subject_id: String::new(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// Smallest box holding every finite voxel, or `None` if all voxels are infinite.
    /// Persistence of the finite part does not depend on the infinite margin.
    pub fn crop_to_finite(&self) -> Option<SignedDistanceVolume> {
        let [nx, ny, _] = self.dims;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (i, v) in self.values.iter().enumerate() {
            if v.is_finite() {
                let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        if lo[0] == usize::MAX {
            return None;
        }
        let dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
        let mut values = Vec::with_capacity(dims.iter().product());
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    values.push(self.get(x, y, z));
                }
            }
        }
        Some(SignedDistanceVolume {
            dims,
            values,
            spacing: self.spacing,
            provenance: self.provenance,
            subject_id: self.subject_id.clone(),
        })
    }

    /// Line-oriented text form: a header line `SDV1 nx ny nz spacing provenance subject`
    /// followed by one value per line, infinite values written as `inf`.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 8 + 64);
        let subject = if self.subject_id.is_empty() { "-" } else { &self.subject_id };
        let [nx, ny, nz] = self.dims;
        writeln!(s, "SDV1 {nx} {ny} {nz} {} {} {subject}", self.spacing, self.provenance.as_str()).unwrap();
        for v in &self.values {
            if v.is_infinite() {
                s.push_str("inf\n");
            } else {
                writeln!(s, "{v}").unwrap();
            }
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        const F: &str = "SDV1 file";
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(F, "empty input"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "SDV1" {
            return Err(Error::format(F, "header must be `SDV1 nx ny nz spacing provenance subject`"));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::format(F, format!("bad dimension {s:?}")));
        let dims = [dim(fields[1])?, dim(fields[2])?, dim(fields[3])?];
        let spacing: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite() && *s > 0.0)
            .ok_or_else(|| Error::format(F, format!("bad spacing {:?}", fields[4])))?;
        let provenance = match fields[5] {
            "SEDT3" => Provenance::Sedt3,
            "SEDT2" => Provenance::Sedt2,
            p => return Err(Error::format(F, format!("unknown provenance {p:?}"))),
        };
        let expected = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::format(F, "dims must be positive"))?;
        let mut values = Vec::with_capacity(expected.min(1 << 24));
        for line in lines {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v = if t == "inf" {
                f64::INFINITY
            } else {
                let v: f64 = t.parse().map_err(|_| Error::format(F, format!("bad value {t:?}")))?;
                if !v.is_finite() {
                    return Err(Error::format(F, format!("non-finite value {t:?}; use `inf`")));
                }
                v
            };
            if values.len() == expected {
                return Err(Error::format(F, "more values than dims allow"));
            }
            values.push(v);
        }
        if values.len() != expected {
            return Err(Error::format(F, format!("expected {expected} values, found {}", values.len())));
        }
        let mut sdv = Self::from_values(dims, values, spacing, provenance)?;
        if fields[6] != "-" {
            sdv.subject_id = fields[6].to_string();
        }
        Ok(sdv)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }
}

fn signed_from_squared(sq: u64, negative: bool, spacing: f64) -> f64 {
    let d = (sq as f64).sqrt() * spacing;
    if negative {
        -d
    } else {
        d
    }
}

/// Signed squared distances of a three-class volume: AT negative, non-AT positive,
/// non-tumor `i64::MAX`. Distances count voxels; spacing is applied by [`sedt3`].
pub fn sedt3_squared(vol: &LabelVolume) -> Result<Vec<i64>> {
    let dims = vol.dims();
    let voxels = vol.voxels();
    let mut out = vec![i64::MAX; voxels.len()];
    for (class, sign) in [(Label::AT, -1i64), (Label::NonAT, 1)] {
        if !voxels.contains(&class) {
            continue;
        }
        let feature: Vec<bool> = voxels.iter().map(|&l| l != class).collect();
        let d = squared_edt(&feature, dims);
        for (i, &l) in voxels.iter().enumerate() {
            if l == class {
                if d[i] == SQ_INF {
                    return Err(Error::invalid("volume has a single label; no label boundary to measure"));
                }
                out[i] = sign * d[i] as i64;
            }
        }
    }
    Ok(out)
}

/// SEDT-3: signed distance of each tumor voxel to the nearest voxel of a different label.
pub fn sedt3(vol: &LabelVolume) -> Result<SignedDistanceVolume> {
    let sq = sedt3_squared(vol)?;
    let values = sq
        .iter()
        .map(|&s| {
            if s == i64::MAX {
                f64::INFINITY
            } else {
                signed_from_squared(s.unsigned_abs(), s < 0, vol.spacing())
            }
        })
        .collect();
    let mut sdv = SignedDistanceVolume::from_values(vol.dims(), values, vol.spacing(), Provenance::Sedt3)?;
    sdv.subject_id = vol.subject_id.clone();
    Ok(sdv)
}

/// Binary 2D image, row-major with x fastest. `true` marks tumor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(BinaryImage { width, height, pixels })
    }

    pub fn area(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[x + self.width * y]
    }
}

/// SEDT-2: tumor pixels get minus the distance to the nearest non-tumor pixel,
/// non-tumor pixels plus the distance to the nearest tumor pixel.
pub fn sedt2(img: &BinaryImage) -> Result<SignedDistanceVolume> {
    let area = img.area();
    if area == 0 || area == img.pixels.len() {
        return Err(Error::invalid("SEDT-2 needs both tumor and non-tumor pixels"));
    }
    let dims = [img.width, img.height, 1];
    let to_tumor = squared_edt(&img.pixels, dims);
    let background: Vec<bool> = img.pixels.iter().map(|&p| !p).collect();
    let to_background = squared_edt(&background, dims);
    let values = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &tumor)| {
            if tumor {
                signed_from_squared(to_background[i], true, 1.0)
            } else {
                signed_from_squared(to_tumor[i], false, 1.0)
            }
        })
        .collect();
    SignedDistanceVolume::from_values(dims, values, 1.0, Provenance::Sedt2)
}
