//! Surface extraction and surface-distance metrics.
//!
//! Distances between two surfaces are pooled from both directions: every
//! point of the first surface with its nearest neighbour on the second,
//! followed by every point of the second with its nearest neighbour on the
//! first, each in linear-index order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{linear_index, voxel_count, Dims, Spacing};

/// Foreground voxels that touch background or the volume border across a face.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    spacing: Spacing,
    coords: Vec<[usize; 3]>,
}

impl SurfacePointSet {
    pub fn coords(&self) -> &[[usize; 3]] {
        &self.coords
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Position of point `i` in mm.
    pub fn position(&self, i: usize) -> [f64; 3] {
        position(self.coords[i], self.spacing)
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.coords.iter().map(|&c| position(c, self.spacing)).collect()
    }
}

fn position(c: [usize; 3], s: Spacing) -> [f64; 3] {
    [c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]]
}

/// Squared Euclidean distance; the single formula every distance in this
/// module goes through.
#[inline]
pub fn squared_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

fn check_mask(mask: &[bool], dims: Dims) -> Result<()> {
    if mask.len() != voxel_count(dims) {
        return Err(Error::SizeMismatch {
            expected: voxel_count(dims),
            actual: mask.len(),
        });
    }
    Ok(())
}

pub fn extract_surface(mask: &[bool], dims: Dims, spacing: Spacing) -> Result<SurfacePointSet> {
    check_mask(mask, dims)?;
    let [nx, ny, nz] = dims;
    let mut coords = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask[linear_index(dims, x, y, z)] {
                    continue;
                }
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                let exposed = border
                    || !mask[linear_index(dims, x - 1, y, z)]
                    || !mask[linear_index(dims, x + 1, y, z)]
                    || !mask[linear_index(dims, x, y - 1, z)]
                    || !mask[linear_index(dims, x, y + 1, z)]
                    || !mask[linear_index(dims, x, y, z - 1)]
                    || !mask[linear_index(dims, x, y, z + 1)];
                if exposed {
                    coords.push([x, y, z]);
                }
            }
        }
    }
    Ok(SurfacePointSet { spacing, coords })
}

/// Exact nearest-neighbour lookup over a point set sorted along x.
struct SortedPoints {
    points: Vec<[f64; 3]>,
}

impl SortedPoints {
    fn new(mut points: Vec<[f64; 3]>) -> Self {
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Self { points }
    }

    fn nearest_squared(&self, q: [f64; 3]) -> f64 {
        let pts = &self.points;
        let start = pts.partition_point(|p| p[0] < q[0]);
        let mut best = f64::INFINITY;
        for p in &pts[start..] {
            let dx = p[0] - q[0];
            if dx * dx > best {
                break;
            }
            best = best.min(squared_distance(q, *p));
        }
        for p in pts[..start].iter().rev() {
            let dx = p[0] - q[0];
            if dx * dx > best {
                break;
            }
            best = best.min(squared_distance(q, *p));
        }
        best
    }
}

/// Distance from every point of `from` to its nearest point of `to`, in
/// `from`'s order.
pub fn directed_distances(from: &SurfacePointSet, to: &SurfacePointSet) -> Vec<f64> {
    let index = SortedPoints::new(to.positions());
    from.positions()
        .par_iter()
        .map(|&q| index.nearest_squared(q).sqrt())
        .collect()
}

/// Both directed distance lists concatenated, `pred -> gt` first.
pub fn pooled_surface_distances(pred: &[bool], gt: &[bool], dims: Dims, spacing: Spacing) -> Result<Vec<f64>> {
    let a = extract_surface(pred, dims, spacing)?;
    let b = extract_surface(gt, dims, spacing)?;
    if a.is_empty() || b.is_empty() {
        let which = if a.is_empty() { "prediction" } else { "ground truth" };
        return Err(Error::UndefinedMetric(format!("{which} mask is empty")));
    }
    let mut d = directed_distances(&a, &b);
    d.extend(directed_distances(&b, &a));
    Ok(d)
}

/// Mean of the pooled distances, summed in order.
pub fn assd_from_pooled(d: &[f64]) -> f64 {
    d.iter().sum::<f64>() / d.len() as f64
}

/// Nearest-rank 95th percentile: the `ceil(0.95 n)`-th smallest value.
pub fn hd95_from_pooled(d: &[f64]) -> f64 {
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[nearest_rank_95(sorted.len()) - 1]
}

fn nearest_rank_95(n: usize) -> usize {
    (95 * n).div_ceil(100).max(1)
}

pub fn assd(pred: &[bool], gt: &[bool], dims: Dims, spacing: Spacing) -> Result<f64> {
    Ok(assd_from_pooled(&pooled_surface_distances(pred, gt, dims, spacing)?))
}

pub fn hd95(pred: &[bool], gt: &[bool], dims: Dims, spacing: Spacing) -> Result<f64> {
    Ok(hd95_from_pooled(&pooled_surface_distances(pred, gt, dims, spacing)?))
}
