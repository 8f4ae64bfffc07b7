//! Conventional augmentation: random affine + elastic deformation applied
//! identically to image and labels, and a global intensity shift/scale.
//!
//! Warping pulls: output voxel `p` reads the source at `p + d(p)`, where `d`
//! is a dense [`DisplacementField`] in voxel units.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::volume::resample::sample_nearest;
use crate::volume::{linear_index, sample_trilinear, voxel_count, Dims, LabelMap, Modality, Spacing, Volume};

/// Control points per axis of the elastic grid.
pub const ELASTIC_NODES: usize = 8;
const ELASTIC_LEN: usize = ELASTIC_NODES * ELASTIC_NODES * ELASTIC_NODES;

/// Sampling ranges for [`GeomParams`]. Symmetric ranges are given by their
/// half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeomRanges {
    /// voxels
    pub translation: f64,
    /// radians, per axis
    pub rotation: f64,
    pub scale: [f64; 2],
    /// voxels, per control-point component
    pub elastic: f64,
}

impl Default for GeomRanges {
    fn default() -> Self {
        Self {
            translation: 20.0,
            rotation: 0.35,
            scale: [0.8, 1.2],
            elastic: 15.0,
        }
    }
}

impl GeomRanges {
    /// Ranges that always produce the identity transform.
    pub fn identity() -> Self {
        Self {
            translation: 0.0,
            rotation: 0.0,
            scale: [1.0, 1.0],
            elastic: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.translation >= 0.0
            && self.rotation >= 0.0
            && self.elastic >= 0.0
            && self.scale[0] > 0.0
            && self.scale[0] <= self.scale[1]
            && [self.translation, self.rotation, self.elastic, self.scale[1]]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad geometry ranges {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomParams {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
    pub scale: [f64; 3],
    /// `ELASTIC_NODES`³ control-point displacements, node `(i, j, k)` at
    /// `i + 8 * (j + 8 * k)`.
    pub elastic: Vec<[f64; 3]>,
}

impl GeomParams {
    pub fn identity() -> Self {
        Self {
            translation: [0.0; 3],
            rotation: [0.0; 3],
            scale: [1.0; 3],
            elastic: vec![[0.0; 3]; ELASTIC_LEN],
        }
    }

    pub fn is_within(&self, r: &GeomRanges) -> bool {
        let sym = |v: f64, h: f64| v >= -h && v <= h;
        self.translation.iter().all(|&v| sym(v, r.translation))
            && self.rotation.iter().all(|&v| sym(v, r.rotation))
            && self.scale.iter().all(|&v| v >= r.scale[0] && v <= r.scale[1])
            && self.elastic.len() == ELASTIC_LEN
            && self.elastic.iter().flatten().all(|&v| sym(v, r.elastic))
    }
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    // one draw per component even for empty ranges keeps the stream layout fixed
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Draws every component uniformly from its range.
pub fn sample_geom_params(rng: &mut Rng, ranges: &GeomRanges) -> GeomParams {
    let t = ranges.translation;
    let a = ranges.rotation;
    let e = ranges.elastic;
    let translation = std::array::from_fn(|_| uniform(rng, -t, t));
    let rotation = std::array::from_fn(|_| uniform(rng, -a, a));
    let scale = std::array::from_fn(|_| uniform(rng, ranges.scale[0], ranges.scale[1]));
    let elastic = (0..ELASTIC_LEN)
        .map(|_| std::array::from_fn(|_| uniform(rng, -e, e)))
        .collect();
    GeomParams {
        translation,
        rotation,
        scale,
        elastic,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dims: Dims,
    vectors: Vec<[f64; 3]>,
}

impl DisplacementField {
    pub fn new(dims: Dims, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if vectors.len() != voxel_count(dims) {
            return Err(Error::InvalidVolume(format!(
                "field has {} vectors for dims {dims:?}",
                vectors.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume("non-finite displacement".into()));
        }
        Ok(Self { dims, vectors })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            vectors: vec![[0.0; 3]; voxel_count(dims)],
        }
    }

    /// Constant displacement everywhere.
    pub fn uniform(dims: Dims, d: [f64; 3]) -> Self {
        Self {
            dims,
            vectors: vec![d; voxel_count(dims)],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        self.vectors[linear_index(self.dims, x, y, z)]
    }

    pub fn max_magnitude(&self) -> f64 {
        self.vectors
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// `Rz * Ry * Rx`: the x rotation is applied first.
fn rotation_matrix(angles: [f64; 3]) -> Mat3 {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sz, cz) = angles[2].sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// Dense field for `params` on a grid of `dims`.
///
/// The affine part maps output voxel `p` to source position
/// `c + R S (p - c) + t` about the grid centre `c`; the elastic part is the
/// control grid (spanning the volume corner to corner) upsampled trilinearly.
/// `spacing` is carried for API symmetry: all quantities are in voxels.
pub fn build_displacement_field(params: &GeomParams, dims: Dims, _spacing: Spacing) -> Result<DisplacementField> {
    if dims.iter().any(|&d| d < ELASTIC_NODES) {
        return Err(Error::DimsTooSmall {
            dims,
            min: ELASTIC_NODES,
        });
    }
    if params.elastic.len() != ELASTIC_LEN {
        return Err(Error::InvalidConfig(format!(
            "elastic grid needs {ELASTIC_LEN} nodes, got {}",
            params.elastic.len()
        )));
    }
    let rot = rotation_matrix(params.rotation);
    let lin: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| rot[i][j] * params.scale[j]));
    let center: [f64; 3] = std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let node_step: [f64; 3] = std::array::from_fn(|a| (ELASTIC_NODES - 1) as f64 / (dims[a] as f64 - 1.0));
    let elastic_zero = params.elastic.iter().all(|v| *v == [0.0; 3]);

    let plane = dims[0] * dims[1];
    let mut vectors = vec![[0.0; 3]; voxel_count(dims)];
    vectors.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let v = [x as f64 - center[0], y as f64 - center[1], z as f64 - center[2]];
                let mut d: [f64; 3] =
                    std::array::from_fn(|i| (lin[i][0] * v[0] + lin[i][1] * v[1] + lin[i][2] * v[2]) - v[i] + params.translation[i]);
                if !elastic_zero {
                    let e = interpolate_grid(&params.elastic, [
                        x as f64 * node_step[0],
                        y as f64 * node_step[1],
                        z as f64 * node_step[2],
                    ]);
                    for i in 0..3 {
                        d[i] += e[i];
                    }
                }
                slab[x + dims[0] * y] = d;
            }
        }
    });
    Ok(DisplacementField { dims, vectors })
}

/// Trilinear interpolation of the control grid at continuous node coords.
fn interpolate_grid(nodes: &[[f64; 3]], u: [f64; 3]) -> [f64; 3] {
    let last = (ELASTIC_NODES - 1) as f64;
    let mut i0 = [0usize; 3];
    let mut f = [0.0; 3];
    for a in 0..3 {
        let c = u[a].clamp(0.0, last);
        let base = c.floor().min(last - 1.0);
        i0[a] = base as usize;
        f[a] = c - base;
    }
    let node = |i: usize, j: usize, k: usize| nodes[i + ELASTIC_NODES * (j + ELASTIC_NODES * k)];
    let mut out = [0.0; 3];
    for dz in 0..2 {
        let wz = if dz == 0 { 1.0 - f[2] } else { f[2] };
        for dy in 0..2 {
            let wy = if dy == 0 { 1.0 - f[1] } else { f[1] };
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - f[0] } else { f[0] };
                let w = wx * wy * wz;
                if w == 0.0 {
                    continue;
                }
                let n = node(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                for c in 0..3 {
                    out[c] += w * n[c];
                }
            }
        }
    }
    out
}

/// Backward warp with trilinear sampling; outside reads as 0.
pub fn warp_volume(vol: &Volume, field: &DisplacementField) -> Result<Volume> {
    vol.same_grid(field.dims)?;
    let dims = vol.dims();
    let plane = dims[0] * dims[1];
    let mut out = vec![0.0f32; vol.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let d = field.vectors[linear_index(dims, x, y, z)];
                let pos = [x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]];
                slab[x + dims[0] * y] = sample_trilinear(vol.data(), dims, pos);
            }
        }
    });
    Ok(Volume::from_parts(dims, vol.spacing(), out))
}

/// Backward warp with nearest-neighbour sampling; outside reads as label 0.
pub fn warp_labels(labels: &LabelMap, field: &DisplacementField) -> Result<LabelMap> {
    labels.same_grid(field.dims)?;
    let dims = labels.dims();
    let plane = dims[0] * dims[1];
    let mut out = vec![0u16; labels.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let d = field.vectors[linear_index(dims, x, y, z)];
                let pos = [x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]];
                slab[x + dims[0] * y] = sample_nearest(labels.labels(), dims, pos);
            }
        }
    });
    Ok(LabelMap::from_parts(dims, labels.spacing(), out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityJitterParams {
    pub shift: f64,
    pub scale: f64,
}

impl IntensityJitterParams {
    pub fn identity() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterRanges {
    /// half-width of the additive shift
    pub shift: f64,
    pub scale: [f64; 2],
}

impl JitterRanges {
    pub fn for_modality(modality: Modality) -> Self {
        match modality {
            Modality::Ct => Self {
                shift: 0.2,
                scale: [0.8, 1.2],
            },
            Modality::Mr => Self {
                shift: 0.2,
                scale: [0.6, 1.4],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shift >= 0.0 && self.shift.is_finite() && self.scale[0] <= self.scale[1] && self.scale[0].is_finite() && self.scale[1].is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad jitter ranges {self:?}")))
        }
    }
}

impl Default for JitterRanges {
    fn default() -> Self {
        Self::for_modality(Modality::Ct)
    }
}

pub fn sample_jitter(rng: &mut Rng, ranges: &JitterRanges) -> IntensityJitterParams {
    let shift = uniform(rng, -ranges.shift, ranges.shift);
    let scale = uniform(rng, ranges.scale[0], ranges.scale[1]);
    IntensityJitterParams { shift, scale }
}

/// `v * scale + shift`, no clipping.
pub fn intensity_jitter(vol: &Volume, params: IntensityJitterParams) -> Result<Volume> {
    if params == IntensityJitterParams::identity() {
        return Ok(vol.clone());
    }
    vol.map(|v| (f64::from(v) * params.scale + params.shift) as f32)
}
