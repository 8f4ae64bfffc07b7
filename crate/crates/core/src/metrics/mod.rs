//! Segmentation metrics: Dice, average symmetric surface distance, HD95 and
//! the generalized Dice loss.

mod gdl;
mod overlap;
mod surface;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelMap;

pub use gdl::{gdl_with_gradient, generalized_dice_loss, GdlOutput, SoftPrediction};
pub use overlap::{dice, dice_per_label};
pub use surface::{
    assd, assd_from_pooled, directed_distances, extract_surface, hd95, hd95_from_pooled, pooled_surface_distances,
    squared_distance, SurfacePointSet,
};

/// Metrics for one label. Distances are `None` when either mask is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub dsc: f64,
    pub assd_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub per_label: BTreeMap<u16, LabelMetrics>,
    pub mean: LabelMetrics,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Labels whose surface distances could not be computed.
    pub fn undefined_labels(&self) -> Vec<u16> {
        self.per_label
            .iter()
            .filter(|(_, m)| m.assd_mm.is_none())
            .map(|(&l, _)| l)
            .collect()
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Label means, background excluded. Distance means skip labels where the
/// distance is undefined.
pub fn mean_report(per_label: BTreeMap<u16, LabelMetrics>) -> MetricReport {
    let fg = || per_label.iter().filter(|(&l, _)| l != 0).map(|(_, m)| m);
    let mean = LabelMetrics {
        dsc: mean_of(fg().map(|m| m.dsc)).unwrap_or(f64::NAN),
        assd_mm: mean_of(fg().filter_map(|m| m.assd_mm)),
        hd95_mm: mean_of(fg().filter_map(|m| m.hd95_mm)),
    };
    MetricReport { per_label, mean }
}

/// Full report over every foreground label present in either map, using the
/// ground truth's spacing.
pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricReport> {
    pred.same_grid(gt.dims())?;
    let labels = overlap::foreground_union(pred, gt);
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("neither map has a foreground label".into()));
    }
    let per_label = labels
        .par_iter()
        .map(|&l| {
            let dsc = dice(pred, gt, l)?;
            let (p, g) = (pred.mask(l), gt.mask(l));
            let (assd_mm, hd95_mm) = match pooled_surface_distances(&p, &g, gt.dims(), gt.spacing()) {
                Ok(d) => (Some(assd_from_pooled(&d)), Some(hd95_from_pooled(&d))),
                Err(Error::UndefinedMetric(_)) => (None, None),
                Err(e) => return Err(e),
            };
            Ok((l, LabelMetrics { dsc, assd_mm, hd95_mm }))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(mean_report(per_label))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(dsc: f64) -> LabelMetrics {
        LabelMetrics {
            dsc,
            assd_mm: Some(dsc * 10.0),
            hd95_mm: None,
        }
    }

    #[test]
    fn single_label_mean() {
        let r = mean_report(BTreeMap::from([(3, m(0.7))]));
        assert_eq!(r.mean.dsc, 0.7);
        assert_eq!(r.mean.assd_mm, Some(7.0));
        assert_eq!(r.mean.hd95_mm, None);
    }

    #[test]
    fn two_label_mean_skips_background() {
        let r = mean_report(BTreeMap::from([(0, m(0.1)), (1, m(0.8)), (2, m(0.9))]));
        assert!((r.mean.dsc - 0.85).abs() < 1e-15);
        let swapped = mean_report(BTreeMap::from([(2, m(0.9)), (1, m(0.8)), (0, m(0.1))]));
        assert_eq!(swapped.mean, r.mean);
    }

    #[test]
    fn identical_maps_report() {
        let gt = LabelMap::from_fn([6, 6, 6], [1.0; 3], |x, y, _| (x / 2 + y / 3) as u16).unwrap();
        let r = evaluate(&gt, &gt).unwrap();
        assert_eq!(r.per_label.len(), gt.label_set().len() - 1);
        for v in r.per_label.values() {
            assert_eq!(*v, LabelMetrics { dsc: 1.0, assd_mm: Some(0.0), hd95_mm: Some(0.0) });
        }
    }

    #[test]
    fn missing_label_gives_null_distances() {
        let gt = LabelMap::from_fn([4, 4, 4], [1.0; 3], |x, _, _| if x < 2 { 1 } else { 2 }).unwrap();
        let pred = LabelMap::from_fn([4, 4, 4], [1.0; 3], |_, _, _| 1).unwrap();
        let r = evaluate(&pred, &gt).unwrap();
        assert_eq!(r.undefined_labels(), [2]);
        assert_eq!(r.per_label[&2].dsc, 0.0);
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(json["per_label"]["2"]["assd_mm"].is_null());
        assert!(json["per_label"]["1"]["hd95_mm"].is_number());
    }

    #[test]
    fn report_json_round_trips() {
        let gt = LabelMap::from_fn([5, 5, 5], [0.5, 1.0, 2.0], |x, y, z| ((x + y + z) % 3) as u16).unwrap();
        let pred = LabelMap::from_fn([5, 5, 5], [0.5, 1.0, 2.0], |x, y, z| ((x + y * z) % 3) as u16).unwrap();
        let r = evaluate(&pred, &gt).unwrap();
        let back: MetricReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
