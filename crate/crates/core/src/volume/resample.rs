//! Grid resampling. Samples falling outside the source grid read as 0.

use rayon::prelude::*;

use super::{linear_index, voxel_count, Dims, LabelMap, Spacing, Volume};
use crate::error::{Error, Result};

// Continuous indices closer than this to an integer are treated as exact grid
// nodes, so rounding noise in `center / spacing` cannot break identity resampling.
const SNAP: f64 = 1e-9;

#[inline]
fn voxel_or_zero(data: &[f32], dims: Dims, x: i64, y: i64, z: i64) -> f64 {
    if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64 {
        0.0
    } else {
        f64::from(data[linear_index(dims, x as usize, y as usize, z as usize)])
    }
}

/// Trilinear interpolation at continuous voxel index `pos`; neighbours outside
/// the grid contribute 0. Exact grid nodes return the stored value untouched.
pub fn sample_trilinear(data: &[f32], dims: Dims, pos: [f64; 3]) -> f32 {
    let base = pos.map(f64::floor);
    let frac = [pos[0] - base[0], pos[1] - base[1], pos[2] - base[2]];
    let (x0, y0, z0) = (base[0] as i64, base[1] as i64, base[2] as i64);
    if frac == [0.0; 3] {
        return voxel_or_zero(data, dims, x0, y0, z0) as f32;
    }
    let mut acc = 0.0;
    for dz in 0..2 {
        let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
        if wz == 0.0 {
            continue;
        }
        for dy in 0..2 {
            let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
            if wy == 0.0 {
                continue;
            }
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                if wx == 0.0 {
                    continue;
                }
                acc += wx * wy * wz * voxel_or_zero(data, dims, x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    acc as f32
}

/// Nearest-neighbour lookup (ties round up); outside reads as label 0.
pub(crate) fn sample_nearest(labels: &[u16], dims: Dims, pos: [f64; 3]) -> u16 {
    let idx = pos.map(|p| (p + 0.5).floor());
    if idx.iter().zip(dims).any(|(&i, d)| i < 0.0 || i >= d as f64) {
        return 0;
    }
    labels[linear_index(dims, idx[0] as usize, idx[1] as usize, idx[2] as usize)]
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn check_target(dims: Dims, spacing: Spacing) -> Result<()> {
    if dims.contains(&0) || spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidVolume(format!(
            "target grid must have positive dims and spacing, got {dims:?} / {spacing:?}"
        )));
    }
    Ok(())
}

/// Continuous source index of every target voxel along one axis.
fn axis_positions(n_target: usize, t_spacing: f64, center: f64, s_spacing: f64) -> Vec<f64> {
    let half = (n_target as f64 - 1.0) / 2.0;
    (0..n_target)
        .map(|j| snap(center / s_spacing + (j as f64 - half) * t_spacing / s_spacing))
        .collect()
}

fn grid_positions(src_spacing: Spacing, dims: Dims, spacing: Spacing, center: [f64; 3]) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|a| axis_positions(dims[a], spacing[a], center[a], src_spacing[a]))
}

/// Trilinear resampling onto a grid of `target_dims` x `target_spacing`
/// whose centre sits at the physical point `center` (mm, in the source frame
/// where voxel `i` is at `i * spacing`).
pub fn resample_to_grid(vol: &Volume, target_dims: Dims, target_spacing: Spacing, center: [f64; 3]) -> Result<Volume> {
    check_target(target_dims, target_spacing)?;
    let [px, py, pz] = grid_positions(vol.spacing(), target_dims, target_spacing, center);
    let plane = target_dims[0] * target_dims[1];
    let mut out = vec![0.0f32; voxel_count(target_dims)];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..target_dims[1] {
            for x in 0..target_dims[0] {
                slab[x + target_dims[0] * y] = sample_trilinear(vol.data(), vol.dims(), [px[x], py[y], pz[z]]);
            }
        }
    });
    Ok(Volume::from_parts(target_dims, target_spacing, out))
}

/// Nearest-neighbour counterpart of [`resample_to_grid`] for label maps.
pub fn resample_labels_to_grid(
    labels: &LabelMap,
    target_dims: Dims,
    target_spacing: Spacing,
    center: [f64; 3],
) -> Result<LabelMap> {
    check_target(target_dims, target_spacing)?;
    let [px, py, pz] = grid_positions(labels.spacing(), target_dims, target_spacing, center);
    let plane = target_dims[0] * target_dims[1];
    let mut out = vec![0u16; voxel_count(target_dims)];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..target_dims[1] {
            for x in 0..target_dims[0] {
                slab[x + target_dims[0] * y] = sample_nearest(labels.labels(), labels.dims(), [px[x], py[y], pz[z]]);
            }
        }
    });
    Ok(LabelMap::from_parts(target_dims, target_spacing, out))
}
