//! Generalized Dice loss with its analytic gradient.
//!
//! With one-hot ground truth `r`, scores `s` and class weights
//! `w_c = 1 / (sum_p r_cp)^2` (zero for classes absent from the ground truth):
//!
//! ```text
//! N = sum_c w_c sum_p r_cp s_cp
//! D = sum_c w_c sum_p (r_cp^2 + s_cp^2)
//! L = 1 - 2 N / D
//! dL/ds_cp = -2 w_c (r_cp D - 2 N s_cp) / D^2
//! ```
//!
//! Since `r^2 + s^2 >= 2 r s`, the loss stays in `[0, 1]` and reaches 0 only
//! at the one-hot ground truth, where the gradient vanishes.

use crate::error::{Error, Result};
use crate::volume::{voxel_count, Dims, LabelMap};

const SIMPLEX_TOL: f64 = 1e-5;

/// Per-voxel class scores, class-major: `scores[c * n_voxels + p]`. Class `c`
/// scores label value `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrediction {
    dims: Dims,
    n_classes: usize,
    scores: Vec<f64>,
}

impl SoftPrediction {
    pub fn new(dims: Dims, n_classes: usize, scores: Vec<f64>) -> Result<Self> {
        let n = voxel_count(dims);
        if n_classes == 0 || scores.len() != n * n_classes {
            return Err(Error::SizeMismatch {
                expected: n * n_classes,
                actual: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidVolume(format!("score {} at {i} is outside [0, 1]", scores[i])));
        }
        for p in 0..n {
            let total: f64 = (0..n_classes).map(|c| scores[c * n + p]).sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidVolume(format!("scores at voxel {p} sum to {total}")));
            }
        }
        Ok(Self { dims, n_classes, scores })
    }

    pub fn one_hot(labels: &LabelMap, n_classes: usize) -> Result<Self> {
        check_labels(labels, n_classes)?;
        let n = labels.len();
        let mut scores = vec![0.0; n * n_classes];
        for (p, &l) in labels.labels().iter().enumerate() {
            scores[usize::from(l) * n + p] = 1.0;
        }
        Self::new(labels.dims(), n_classes, scores)
    }

    pub fn uniform(dims: Dims, n_classes: usize) -> Result<Self> {
        Self::new(dims, n_classes, vec![1.0 / n_classes as f64; voxel_count(dims) * n_classes])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

fn check_labels(gt: &LabelMap, n_classes: usize) -> Result<()> {
    match gt.label_set().last() {
        Some(&l) if usize::from(l) >= n_classes => Err(Error::InvalidVolume(format!(
            "label {l} has no score channel among {n_classes} classes"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdlOutput {
    pub loss: f64,
    /// same layout as the scores
    pub gradient: Vec<f64>,
}

pub fn generalized_dice_loss(pred: &SoftPrediction, gt: &LabelMap) -> Result<GdlOutput> {
    gt.same_grid(pred.dims)?;
    gdl_with_gradient(&pred.scores, pred.n_classes, gt)
}

/// Loss and gradient for arbitrary class-major scores, without the simplex
/// check. Useful for perturbation tests.
pub fn gdl_with_gradient(scores: &[f64], n_classes: usize, gt: &LabelMap) -> Result<GdlOutput> {
    let n = gt.len();
    if scores.len() != n * n_classes {
        return Err(Error::SizeMismatch {
            expected: n * n_classes,
            actual: scores.len(),
        });
    }
    check_labels(gt, n_classes)?;
    let labels = gt.labels();

    let mut counts = vec![0u64; n_classes];
    for &l in labels {
        counts[usize::from(l)] += 1;
    }
    let weights: Vec<f64> = counts
        .iter()
        .map(|&k| if k == 0 { 0.0 } else { 1.0 / (k as f64 * k as f64) })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::UndefinedMetric("ground truth has no labelled voxels".into()));
    }

    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (c, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (mut rs, mut sq) = (0.0f64, 0.0f64);
        for (p, &s) in scores[c * n..(c + 1) * n].iter().enumerate() {
            let r = if usize::from(labels[p]) == c { 1.0 } else { 0.0 };
            rs += r * s;
            sq += r * r + s * s;
        }
        num += w * rs;
        den += w * sq;
    }

    let loss = 1.0 - 2.0 * num / den;
    let mut gradient = vec![0.0; scores.len()];
    for (c, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for p in 0..n {
            let r = if usize::from(labels[p]) == c { 1.0 } else { 0.0 };
            gradient[c * n + p] = -2.0 * w * (r * den - 2.0 * num * scores[c * n + p]) / (den * den);
        }
    }
    Ok(GdlOutput { loss, gradient })
}
