//! Source matching: map a test image's intensities onto the source domain
//! through `SM(v) = C_S^-1(C_T(v))`.
//!
//! `C_T` is the image's own piecewise-constant cumulative histogram, evaluated
//! at the bin containing `v`. `C_S^-1` is an argmin search over the averaged
//! source cumulative histogram, returning a bin centre, ties to the lowest
//! index. Both work on pre-clipped raw intensities.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Modality, Volume};

pub const DEFAULT_BINS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SMConfig {
    pub modality: Modality,
    pub n_bins: usize,
    pub range: [f64; 2],
}

impl SMConfig {
    /// 2048 bins over the modality's pre-clip range.
    pub fn new(modality: Modality) -> Self {
        let range = match modality {
            Modality::Ct => [-1023.0, 1024.0],
            Modality::Mr => [0.0, 2047.0],
        };
        Self {
            modality,
            n_bins: DEFAULT_BINS,
            range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range;
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig(format!("n_bins must be at least 2, got {}", self.n_bins)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("bad histogram range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.range[1] - self.range[0]) / self.n_bins as f64
    }

    /// Index of the bin holding `v`; values outside the range land in the end bins.
    pub fn bin_of(&self, v: f32) -> usize {
        let [lo, hi] = self.range;
        let t = ((f64::from(v) - lo) / (hi - lo) * self.n_bins as f64).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n_bins - 1)
        }
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.range[0] + (i as f64 + 0.5) * self.bin_width()
    }
}

impl Default for SMConfig {
    fn default() -> Self {
        Self::new(Modality::Ct)
    }
}

/// Normalised cumulative histogram over uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityHistogram {
    n_bins: usize,
    range: [f64; 2],
    modality: Modality,
    cumulative: Vec<f64>,
}

impl IntensityHistogram {
    pub fn new(config: &SMConfig, cumulative: Vec<f64>) -> Result<Self> {
        let h = Self {
            n_bins: config.n_bins,
            range: config.range,
            modality: config.modality,
            cumulative,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        self.config().validate()?;
        let h = &self.cumulative;
        if h.len() != self.n_bins {
            return Err(Error::InvalidConfig(format!(
                "histogram has {} bins, header says {}",
                h.len(),
                self.n_bins
            )));
        }
        if h.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("cumulative values must lie in [0, 1]".into()));
        }
        if h.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("cumulative histogram is not nondecreasing".into()));
        }
        if (h[h.len() - 1] - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!("cumulative histogram ends at {}", h[h.len() - 1])));
        }
        Ok(())
    }

    pub fn config(&self) -> SMConfig {
        SMConfig {
            modality: self.modality,
            n_bins: self.n_bins,
            range: self.range,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn range(&self) -> [f64; 2] {
        self.range
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let c = self.config();
        (0..self.n_bins).map(|i| c.bin_center(i)).collect()
    }

    /// `C(v)`: cumulative value of the bin containing `v`.
    pub fn cdf(&self, v: f32) -> f64 {
        self.cumulative[self.config().bin_of(v)]
    }

    /// The histogram file's contents.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let h: Self = serde_json::from_str(&text)?;
        h.validate()?;
        Ok(h)
    }
}

fn check_config(hist: &IntensityHistogram, config: &SMConfig) -> Result<()> {
    if hist.config() != *config {
        return Err(Error::ConfigMismatch(format!(
            "histogram was fitted with {:?}, call uses {config:?}",
            hist.config()
        )));
    }
    Ok(())
}

fn bin_counts(vol: &Volume, config: &SMConfig) -> Vec<u64> {
    vol.data()
        .par_chunks(1 << 16)
        .map(|chunk| {
            let mut counts = vec![0u64; config.n_bins];
            for &v in chunk {
                counts[config.bin_of(v)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; config.n_bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

pub fn compute_image_cdf(vol: &Volume, config: &SMConfig) -> Result<IntensityHistogram> {
    config.validate()?;
    if vol.is_empty() {
        return Err(Error::Empty("volume"));
    }
    let n = vol.len() as f64;
    let mut acc = 0u64;
    let cumulative = bin_counts(vol, config)
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    IntensityHistogram::new(config, cumulative)
}

/// Per-bin mean of the images' cumulative histograms, each image weighted
/// equally regardless of its voxel count.
pub fn fit_source_histogram(volumes: &[Volume], config: &SMConfig) -> Result<IntensityHistogram> {
    config.validate()?;
    if volumes.is_empty() {
        return Err(Error::Empty("volume list"));
    }
    let cdfs = volumes
        .par_iter()
        .map(|v| compute_image_cdf(v, config))
        .collect::<Result<Vec<_>>>()?;
    fit_from_cdfs(&cdfs, config)
}

/// Averages already computed image histograms. The result does not depend on
/// their order.
pub fn fit_from_cdfs(cdfs: &[IntensityHistogram], config: &SMConfig) -> Result<IntensityHistogram> {
    if cdfs.is_empty() {
        return Err(Error::Empty("histogram list"));
    }
    for h in cdfs {
        check_config(h, config)?;
    }
    let n = cdfs.len() as f64;
    let mut column = Vec::with_capacity(cdfs.len());
    let cumulative = (0..config.n_bins)
        .map(|i| {
            column.clear();
            column.extend(cdfs.iter().map(|h| h.cumulative[i]));
            column.sort_by(f64::total_cmp);
            (column.iter().sum::<f64>() / n).min(1.0)
        })
        .collect();
    IntensityHistogram::new(config, cumulative)
}

fn argmin_bin(h: &[f64], p: f64) -> usize {
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, &hi) in h.iter().enumerate() {
        let err = (hi - p) * (hi - p);
        if err < best_err {
            best = i;
            best_err = err;
        }
    }
    best
}

/// Centre of the bin whose cumulative value is closest to `p`.
pub fn inverse_quantile(hist: &IntensityHistogram, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(hist.config().bin_center(argmin_bin(&hist.cumulative, p)))
}

/// Output intensity for every bin of the image's own histogram.
pub fn sm_lookup_table(image_cdf: &IntensityHistogram, source_hist: &IntensityHistogram) -> Result<Vec<f32>> {
    check_config(source_hist, &image_cdf.config())?;
    let config = source_hist.config();
    Ok(image_cdf
        .cumulative
        .par_iter()
        .map(|&p| config.bin_center(argmin_bin(&source_hist.cumulative, p)) as f32)
        .collect())
}

pub fn apply_sm(vol: &Volume, source_hist: &IntensityHistogram, config: &SMConfig) -> Result<Volume> {
    check_config(source_hist, config)?;
    let own = compute_image_cdf(vol, config)?;
    let table = sm_lookup_table(&own, source_hist)?;
    vol.map(|v| table[config.bin_of(v)])
}
