//! Dense 3D scalar volumes and label maps.
//!
//! Voxel `(x, y, z)` lives at linear index `x + nx * (y + ny * z)`; x is the
//! fastest axis. Voxel centres sit at physical position `index * spacing`.

mod io;
mod normalize;
mod phantom;
pub(crate) mod resample;

pub use io::{load_labels, load_volume, payload_path, save_labels, save_volume, Dtype, SvolHeader};
pub use normalize::{normalize_ct, normalize_mr, preclip_ct, preclip_mr};
pub use phantom::{make_phantom, PhantomSpec, ShapeMode, TissueIntensity};
pub use resample::{resample_labels_to_grid, resample_to_grid, sample_trilinear};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acquisition modality; selects normalisation, jitter and clip ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ct,
    Mr,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ct => "ct",
            Modality::Mr => "mr",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(Modality::Ct),
            "mr" => Ok(Modality::Mr),
            other => Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Dims = [usize; 3];
pub type Spacing = [f64; 3];

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub(crate) fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

fn check_geometry(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidVolume(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    let expected = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))?;
    if expected != len {
        return Err(Error::InvalidVolume(format!(
            "data length {len} does not match dims {dims:?} ({expected} voxels)"
        )));
    }
    Ok(())
}

/// Scalar image on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f32>,
}

impl Volume {
    /// Validates dims, spacing, length and finiteness.
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; voxel_count(dims)])
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    /// Internal constructor for results of operations that preserve the
    /// invariants by construction. Non-finite values are still rejected in
    /// debug builds.
    pub(crate) fn from_parts(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), voxel_count(dims));
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, spacing, data }
    }

    /// Like [`Volume::new`] but reports non-finite values produced by an
    /// operation as an error instead of a panic.
    pub(crate) fn checked(dims: Dims, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self::from_parts(dims, spacing, data))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    /// Applies `f` voxelwise, keeping the geometry.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::checked(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Frobenius norm, accumulated sequentially in double precision.
    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub(crate) fn same_grid(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(Error::DimMismatch {
                left: self.dims,
                right: dims,
            });
        }
        Ok(())
    }
}

/// Integer label image. Label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u16>,
    label_set: Vec<u16>,
}

impl LabelMap {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u16>) -> Result<Self> {
        check_geometry(dims, spacing, labels.len())?;
        let label_set = distinct_labels(&labels);
        Ok(Self {
            dims,
            spacing,
            labels,
            label_set,
        })
    }

    /// Accepts wider integers and rejects anything that does not fit 16 bits.
    pub fn from_u32(dims: Dims, spacing: Spacing, labels: &[u32]) -> Result<Self> {
        let narrowed = labels
            .iter()
            .map(|&v| u16::try_from(v).map_err(|_| Error::LabelOverflow { value: u64::from(v) }))
            .collect::<Result<Vec<u16>>>()?;
        Self::new(dims, spacing, narrowed)
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> u16) -> Result<Self> {
        let mut labels = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    labels.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, labels)
    }

    pub(crate) fn from_parts(dims: Dims, spacing: Spacing, labels: Vec<u16>) -> Self {
        debug_assert_eq!(labels.len(), voxel_count(dims));
        let label_set = distinct_labels(&labels);
        Self {
            dims,
            spacing,
            labels,
            label_set,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u16> {
        self.labels
    }

    /// Sorted distinct labels present in the map.
    pub fn label_set(&self) -> &[u16] {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u16 {
        self.labels[linear_index(self.dims, x, y, z)]
    }

    /// Binary mask of voxels carrying `label`.
    pub fn mask(&self, label: u16) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub(crate) fn same_grid(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(Error::DimMismatch {
                left: self.dims,
                right: dims,
            });
        }
        Ok(())
    }
}

fn distinct_labels(labels: &[u16]) -> Vec<u16> {
    let mut seen = vec![false; usize::from(u16::MAX) + 1];
    for &l in labels {
        seen[usize::from(l)] = true;
    }
    seen.iter()
        .enumerate()
        .filter_map(|(l, &present)| present.then_some(l as u16))
        .collect()
}
