use std::collections::BTreeMap;

use crate::error::Result;
use crate::volume::LabelMap;

/// `2|P ∩ G| / (|P| + |G|)` for one label. A label absent from both maps
/// scores 1.
pub fn dice(pred: &LabelMap, gt: &LabelMap, label: u16) -> Result<f64> {
    pred.same_grid(gt.dims())?;
    let (mut both, mut p, mut g) = (0u64, 0u64, 0u64);
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        let (ia, ib) = (a == label, b == label);
        p += u64::from(ia);
        g += u64::from(ib);
        both += u64::from(ia && ib);
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

/// Dice for every foreground label present in either map.
pub fn dice_per_label(pred: &LabelMap, gt: &LabelMap) -> Result<BTreeMap<u16, f64>> {
    foreground_union(pred, gt)
        .into_iter()
        .map(|l| Ok((l, dice(pred, gt, l)?)))
        .collect()
}

pub(crate) fn foreground_union(pred: &LabelMap, gt: &LabelMap) -> Vec<u16> {
    let mut labels: Vec<u16> = pred.label_set().iter().chain(gt.label_set()).copied().filter(|&l| l != 0).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}
