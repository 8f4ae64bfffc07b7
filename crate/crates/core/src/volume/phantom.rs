//! Synthetic labelled phantoms for tests and demos.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{voxel_count, Dims, LabelMap, Spacing, Volume};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_LABELS: usize = 16;
const MIN_COVERAGE_PERCENT: usize = 1;
const BLOB_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeMode {
    NestedEllipsoids,
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueIntensity {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: Dims,
    pub spacing: Spacing,
    pub n_labels: usize,
    pub shape_mode: ShapeMode,
    pub intensity_table: Vec<TissueIntensity>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_LABELS).contains(&self.n_labels) {
            return Err(Error::InvalidSpec(format!(
                "n_labels must be in 2..={MAX_LABELS}, got {}",
                self.n_labels
            )));
        }
        if self.intensity_table.len() != self.n_labels {
            return Err(Error::InvalidSpec(format!(
                "intensity_table has {} entries for {} labels",
                self.intensity_table.len(),
                self.n_labels
            )));
        }
        if let Some(t) = self
            .intensity_table
            .iter()
            .find(|t| !t.mean.is_finite() || !t.std.is_finite() || t.std < 0.0)
        {
            return Err(Error::InvalidSpec(format!("bad intensity entry {t:?}")));
        }
        if self.dims.contains(&0) || self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "dims {:?} / spacing {:?} must be positive",
                self.dims, self.spacing
            )));
        }
        Ok(())
    }
}

/// Generates an image and its label map. Deterministic in `spec.seed`.
///
/// Every label `0..n_labels` covers at least 1% of the voxels, otherwise the
/// spec is reported as unsatisfiable.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(Volume, LabelMap)> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let labels = match spec.shape_mode {
        ShapeMode::NestedEllipsoids => {
            let labels = nested_ellipsoids(spec.dims, spec.n_labels, &mut rng);
            check_coverage(&labels, spec.n_labels).map_err(Error::Unsatisfiable)?;
            labels
        }
        ShapeMode::Blobs => {
            let mut attempt = 0;
            loop {
                let labels = blobs(spec.dims, spec.n_labels, &mut rng);
                match check_coverage(&labels, spec.n_labels) {
                    Ok(()) => break labels,
                    Err(msg) if attempt + 1 >= BLOB_ATTEMPTS => {
                        return Err(Error::Unsatisfiable(format!("{msg} after {BLOB_ATTEMPTS} attempts")))
                    }
                    Err(_) => attempt += 1,
                }
            }
        }
    };

    let data: Vec<f32> = labels
        .iter()
        .map(|&l| {
            let t = spec.intensity_table[usize::from(l)];
            let noise: f64 = rng.sample(StandardNormal);
            (t.mean + t.std * noise) as f32
        })
        .collect();

    let image = Volume::new(spec.dims, spec.spacing, data)?;
    let labels = LabelMap::new(spec.dims, spec.spacing, labels)?;
    Ok((image, labels))
}

fn check_coverage(labels: &[u16], n_labels: usize) -> std::result::Result<(), String> {
    let mut counts = vec![0usize; n_labels];
    for &l in labels {
        counts[usize::from(l)] += 1;
    }
    match counts
        .iter()
        .position(|&c| c * 100 < labels.len() * MIN_COVERAGE_PERCENT)
    {
        Some(l) => Err(format!("label {l} covers {} of {} voxels", counts[l], labels.len())),
        None => Ok(()),
    }
}

/// Concentric ellipsoids with shells of equal volume; label `k` is the
/// `k`-th shell counted from outside.
fn nested_ellipsoids(dims: Dims, n_labels: usize, rng: &mut rng::Rng) -> Vec<u16> {
    let center: [f64; 3] =
        std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0 + rng.random_range(-0.05..=0.05) * dims[a] as f64);
    let semi: [f64; 3] = std::array::from_fn(|a| 0.45 * dims[a] as f64 * rng.random_range(0.85..=1.0));
    let shells = (n_labels - 1) as f64;
    // radius fraction of ellipsoid k so every shell has volume 1 / (n - 1)
    let radii: Vec<f64> = (1..n_labels)
        .map(|k| ((n_labels - k) as f64 / shells).cbrt())
        .collect();

    let mut out = Vec::with_capacity(voxel_count(dims));
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64, y as f64, z as f64];
                let rho = (0..3)
                    .map(|a| ((p[a] - center[a]) / semi[a]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                out.push(radii.iter().filter(|&&r| rho <= r).count() as u16);
            }
        }
    }
    out
}

/// Each foreground label is the union of three random balls; later labels
/// paint over earlier ones.
fn blobs(dims: Dims, n_labels: usize, rng: &mut rng::Rng) -> Vec<u16> {
    let n = voxel_count(dims) as f64;
    let target = 0.5 / (n_labels - 1) as f64;
    let mut out = vec![0u16; voxel_count(dims)];
    for label in 1..n_labels {
        for _ in 0..3 {
            let c: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.2..=0.8) * (dims[a] as f64 - 1.0));
            let volume = target * n / 3.0 * rng.random_range(0.8..=1.6);
            let r = (volume * 3.0 / (4.0 * std::f64::consts::PI)).cbrt();
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                        if d2 <= r * r {
                            out[super::linear_index(dims, x, y, z)] = label as u16;
                        }
                    }
                }
            }
        }
    }
    out
}
