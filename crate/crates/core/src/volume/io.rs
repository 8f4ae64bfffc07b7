//! SVOL container: a small JSON header next to a raw little-endian payload.
//!
//! ```text
//! scan.svol.json  {"dims":[x,y,z],"spacing_mm":[sx,sy,sz],"dtype":"f32","byte_order":"le","data":"scan.svol.bin"}
//! scan.svol.bin   x*y*z elements, x fastest
//! ```
//!
//! The `data` entry is resolved relative to the header's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{voxel_count, Dims, LabelMap, Spacing, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U16,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvolHeader {
    pub dims: Dims,
    pub spacing_mm: Spacing,
    pub dtype: String,
    pub byte_order: String,
    pub data: String,
}

impl SvolHeader {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Header {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn dtype(&self) -> Result<Dtype> {
        match self.dtype.as_str() {
            "f32" => Ok(Dtype::F32),
            "u16" => Ok(Dtype::U16),
            other => Err(Error::UnsupportedDtype(other.to_owned())),
        }
    }
}

/// Payload path paired with a header path: `name.svol.json` -> `name.svol.bin`.
pub fn payload_path(header: &Path) -> PathBuf {
    let name = header
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let payload = match name.strip_suffix(".json") {
        Some(stem) => format!("{stem}.bin"),
        None => format!("{name}.bin"),
    };
    header.with_file_name(payload)
}

fn write_pair(path: &Path, dims: Dims, spacing: Spacing, dtype: Dtype, payload: &[u8]) -> Result<()> {
    let bin = payload_path(path);
    let header = SvolHeader {
        dims,
        spacing_mm: spacing,
        dtype: match dtype {
            Dtype::F32 => "f32".into(),
            Dtype::U16 => "u16".into(),
        },
        byte_order: "le".into(),
        data: bin
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(&bin, payload).map_err(|e| Error::io(&bin, e))?;
    let mut text = serde_json::to_string_pretty(&header)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_pair(path: &Path, want: Dtype) -> Result<(SvolHeader, Vec<u8>)> {
    let header = SvolHeader::read(path)?;
    let dtype = header.dtype()?;
    if dtype != want {
        return Err(Error::UnsupportedDtype(format!(
            "{} (expected {})",
            header.dtype,
            match want {
                Dtype::F32 => "f32",
                Dtype::U16 => "u16",
            }
        )));
    }
    if header.byte_order != "le" {
        return Err(Error::Header {
            path: path.to_owned(),
            message: format!("unsupported byte_order {:?}", header.byte_order),
        });
    }
    let bin = path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let payload = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = voxel_count(header.dims) * dtype.width();
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok((header, payload))
}

pub fn save_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = vol.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path.as_ref(), vol.dims(), vol.spacing(), Dtype::F32, &payload)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (header, payload) = read_pair(path.as_ref(), Dtype::F32)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Volume::new(header.dims, header.spacing_mm, data)
}

pub fn save_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = labels.labels().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path.as_ref(), labels.dims(), labels.spacing(), Dtype::U16, &payload)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let (header, payload) = read_pair(path.as_ref(), Dtype::U16)?;
    let labels = payload
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    LabelMap::new(header.dims, header.spacing_mm, labels)
}
