//! Modality-specific intensity normalisation and the pre-clipping applied
//! before source matching.

use super::Volume;
use crate::error::{Error, Result};
use crate::stats;

pub const CT_SCALE: f64 = 2048.0;
pub const CT_CLIP: (f64, f64) = (-1023.0, 1024.0);
pub const MR_CLIP_MAX: f64 = 2047.0;

/// Hounsfield units to `[-1, 1]`: divide by 2048, then clamp.
pub fn normalize_ct(vol: &Volume) -> Volume {
    let data = vol
        .data()
        .iter()
        .map(|&v| (f64::from(v) / CT_SCALE).clamp(-1.0, 1.0) as f32)
        .collect();
    Volume::from_parts(vol.dims(), vol.spacing(), data)
}

/// Affine map sending the 10th percentile to -1 and the 90th to +1.
/// Values outside the percentile band are not clipped.
pub fn normalize_mr(vol: &Volume) -> Result<Volume> {
    let mut sorted = vol.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    let p10 = stats::quantile_sorted(&sorted, 0.1).ok_or(Error::Empty("volume"))?;
    let p90 = stats::quantile_sorted(&sorted, 0.9).ok_or(Error::Empty("volume"))?;
    if p90 <= p10 {
        return Err(Error::DegenerateDistribution(format!(
            "10th and 90th percentile coincide at {p10}"
        )));
    }
    let mid = 0.5 * (p10 + p90);
    let half = 0.5 * (p90 - p10);
    vol.map(|v| ((f64::from(v) - mid) / half) as f32)
}

/// Clamp to `[-1023, 1024]` HU.
pub fn preclip_ct(vol: &Volume) -> Volume {
    let (lo, hi) = CT_CLIP;
    let data = vol
        .data()
        .iter()
        .map(|&v| f64::from(v).clamp(lo, hi) as f32)
        .collect();
    Volume::from_parts(vol.dims(), vol.spacing(), data)
}

/// Shift so the minimum sits at 0, scale so the 0.9 quantile lands on 2047,
/// then clamp to `[0, 2047]`.
pub fn preclip_mr(vol: &Volume) -> Result<Volume> {
    let mut sorted = vol.data().to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    let min = f64::from(*sorted.first().ok_or(Error::Empty("volume"))?);
    let p90 = stats::quantile_sorted(&sorted, 0.9).ok_or(Error::Empty("volume"))?;
    let span = p90 - min;
    if span <= 0.0 {
        return Err(Error::DegenerateDistribution(format!(
            "minimum equals the 90th percentile ({min})"
        )));
    }
    vol.map(|v| ((f64::from(v) - min) * MR_CLIP_MAX / span).clamp(0.0, MR_CLIP_MAX) as f32)
}
