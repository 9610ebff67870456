use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent `(nx, ny, nz)`; voxels are stored x-fastest.
pub type Dims = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NonTumor,
    /// Necrotic core, non-enhancing tumor or edema.
    NonAT,
    /// Active (enhancing) tumor.
    AT,
}

impl Label {
    fn parse(s: &str) -> Option<Label> {
        match s {
            "NonTumor" => Some(Label::NonTumor),
            "NonAT" => Some(Label::NonAT),
            "AT" => Some(Label::AT),
            _ => None,
        }
    }

    pub fn is_tumor(self) -> bool {
        self != Label::NonTumor
    }
}

/// BraTS codes: 0 background, 1 NCR/NET, 2 edema, 4 enhancing tumor.
pub fn default_label_map() -> BTreeMap<String, String> {
    [("0", "NonTumor"), ("1", "NonAT"), ("2", "NonAT"), ("4", "AT")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn default_spacing() -> f64 {
    1.0
}

/// JSON sidecar of an LV1 volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lv1Header {
    pub magic: String,
    pub dims: Vec<usize>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_label_map")]
    pub label_map: BTreeMap<String, String>,
    pub subject_id: String,
    #[serde(default)]
    pub frontal: bool,
    /// Payload file, relative to the header. Defaults to the header path with a `.raw` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

const LV1: &str = "LV1 volume";

#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    voxels: Vec<Label>,
    spacing: f64,
    pub subject_id: String,
    pub frontal: bool,
}

impl LabelVolume {
    /// Validated constructor; rejects size mismatches and volumes without tumor voxels.
    pub fn new(dims: Dims, voxels: Vec<Label>, spacing: f64) -> Result<Self> {
        check_dims(dims)?;
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "dims {dims:?} imply {} voxels, got {}",
                dims.iter().product::<usize>(),
                voxels.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        if !voxels.iter().any(|l| l.is_tumor()) {
            return Err(Error::EmptyTumor);
        }
        Ok(LabelVolume {
            dims,
            voxels,
            spacing,
            subject_id: String::new(),
            frontal: false,
        })
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>, frontal: bool) -> Self {
        self.subject_id = subject_id.into();
        self.frontal = frontal;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[Label] {
        &self.voxels
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Label {
        self.voxels[self.index(x, y, z)]
    }

    /// Decode a header and its payload bytes.
    pub fn from_lv1(header: &Lv1Header, payload: &[u8]) -> Result<Self> {
        if header.magic != "LV1" {
            return Err(Error::format(LV1, format!("bad magic {:?}", header.magic)));
        }
        if header.dims.len() != 3 {
            return Err(Error::format(LV1, format!("dims must have 3 entries, got {}", header.dims.len())));
        }
        let dims = [header.dims[0], header.dims[1], header.dims[2]];
        check_dims(dims)?;
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(LV1, "dims overflow"))?;
        if payload.len() != expected {
            return Err(Error::format(
                LV1,
                format!("dims {dims:?} imply {expected} voxels but payload has {} bytes", payload.len()),
            ));
        }
        let mut table: [Option<Label>; 256] = [None; 256];
        for (code, class) in &header.label_map {
            let code: u8 = code
                .trim()
                .parse()
                .map_err(|_| Error::format(LV1, format!("label code {code:?} is not in 0..=255")))?;
            let label = Label::parse(class)
                .ok_or_else(|| Error::format(LV1, format!("unknown label class {class:?}")))?;
            table[code as usize] = Some(label);
        }
        let voxels = payload
            .iter()
            .map(|&c| table[c as usize].ok_or_else(|| Error::format(LV1, format!("unknown label code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelVolume::new(dims, voxels, header.spacing)?.with_subject(header.subject_id.clone(), header.frontal))
    }

    /// Decode from in-memory header JSON and payload bytes.
    pub fn from_lv1_bytes(header_json: &[u8], payload: &[u8]) -> Result<Self> {
        let header: Lv1Header =
            serde_json::from_slice(header_json).map_err(|e| Error::format(LV1, e.to_string()))?;
        Self::from_lv1(&header, payload)
    }

    /// Load a volume given the path of its JSON header.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        let header: Lv1Header =
            serde_json::from_slice(&text).map_err(|e| Error::format(LV1, format!("{}: {e}", path.display())))?;
        let payload_path = payload_path(path, &header);
        let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        Self::from_lv1(&header, &payload)
    }

    /// Write header and payload; the payload goes next to the header with a `.raw` extension.
    pub fn save(&self, header_path: &Path) -> Result<()> {
        let mut map = BTreeMap::new();
        map.insert("0".to_string(), "NonTumor".to_string());
        map.insert("1".to_string(), "NonAT".to_string());
        map.insert("4".to_string(), "AT".to_string());
        let header = Lv1Header {
            magic: "LV1".into(),
            dims: self.dims.to_vec(),
            spacing: self.spacing,
            label_map: map,
            subject_id: self.subject_id.clone(),
            frontal: self.frontal,
            payload: None,
        };
        let payload: Vec<u8> = self
            .voxels
            .iter()
            .map(|l| match l {
                Label::NonTumor => 0,
                Label::NonAT => 1,
                Label::AT => 4,
            })
            .collect();
        let json = serde_json::to_vec_pretty(&header).expect("header serializes");
        fs::write(header_path, json).map_err(|e| Error::io(header_path, e))?;
        let raw = payload_path(header_path, &header);
        fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))
    }
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("dims must be positive, got {dims:?}")));
    }
    Ok(())
}

fn payload_path(header_path: &Path, header: &Lv1Header) -> PathBuf {
    match &header.payload {
        Some(p) => header_path.parent().unwrap_or(Path::new(".")).join(p),
        None => header_path.with_extension("raw"),
    }
}
