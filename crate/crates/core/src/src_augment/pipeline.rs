//! The full training-time augmentation of one (image, labels) pair.
//!
//! Stages, in order, all drawing from the caller's generator:
//!
//! 1. geometry: [`sample_geom_params`] (always drawn), warp image and labels
//! 2. intensity jitter: [`sample_jitter`] (drawn only when enabled)
//! 3. one fresh net per label of the warped label map, in ascending label order
//! 4. blend weight `alpha ~ U(0, 1)` (drawn only in uniform mode)
//! 5. blended augmentation, mixed with the post-jitter image, rescaled to the
//!    post-jitter image's Frobenius norm
//!
//! Labels only pass through stage 1.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::blend::{mix_with_original, renormalize_frobenius, smooth_masks, src_blend, GaussianKernelSpec, LabelNets};
use super::randconv::sample_randconv;
use crate::augment_geom::{
    build_displacement_field, intensity_jitter, sample_geom_params, sample_jitter, warp_labels, warp_volume, GeomParams,
    GeomRanges, IntensityJitterParams, JitterRanges,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::volume::{LabelMap, Modality, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// `alpha ~ U(0, 1)` per sample
    Uniform,
    /// use `SrcConfig::alpha`
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrcConfig {
    pub enabled: bool,
    pub alpha_mode: AlphaMode,
    /// only read in fixed mode
    pub alpha: f64,
    pub kernel: GaussianKernelSpec,
}

impl Default for SrcConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha_mode: AlphaMode::Uniform,
            alpha: 0.5,
            kernel: GaussianKernelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    pub enabled: bool,
    /// modality defaults when absent
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranges: Option<JitterRanges>,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            ranges: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub modality: Modality,
    pub geometry: GeomRanges,
    pub jitter: JitterConfig,
    pub src: SrcConfig,
}

impl AugmentConfig {
    pub fn new(modality: Modality) -> Self {
        Self {
            modality,
            geometry: GeomRanges::default(),
            jitter: JitterConfig::default(),
            src: SrcConfig::default(),
        }
    }

    /// Geometry, jitter and blending all switched off.
    pub fn passthrough(modality: Modality) -> Self {
        Self {
            modality,
            geometry: GeomRanges::identity(),
            jitter: JitterConfig {
                enabled: false,
                ranges: None,
            },
            src: SrcConfig {
                enabled: false,
                ..SrcConfig::default()
            },
        }
    }

    pub fn jitter_ranges(&self) -> JitterRanges {
        self.jitter
            .ranges
            .unwrap_or_else(|| JitterRanges::for_modality(self.modality))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.jitter_ranges().validate()?;
        self.src.kernel.validate()?;
        if self.src.alpha_mode == AlphaMode::Fixed && !(0.0..=1.0).contains(&self.src.alpha) {
            return Err(Error::AlphaOutOfRange(self.src.alpha));
        }
        Ok(())
    }
}

/// Output pair plus every intermediate quantity drawn along the way.
#[derive(Debug, Clone)]
pub struct AugmentTrace {
    pub image: Volume,
    pub labels: LabelMap,
    /// image after geometry and jitter, the input to the label-aware stage
    pub post_cda: Volume,
    pub geometry: GeomParams,
    pub jitter: IntensityJitterParams,
    pub alpha: Option<f64>,
}

pub fn augment_sample(image: &Volume, labels: &LabelMap, rng: &mut Rng, config: &AugmentConfig) -> Result<(Volume, LabelMap)> {
    let t = augment_sample_traced(image, labels, rng, config)?;
    Ok((t.image, t.labels))
}

pub fn augment_sample_traced(
    image: &Volume,
    labels: &LabelMap,
    rng: &mut Rng,
    config: &AugmentConfig,
) -> Result<AugmentTrace> {
    config.validate()?;
    labels.same_grid(image.dims())?;

    let geometry = sample_geom_params(rng, &config.geometry);
    let (warped, warped_labels) = if geometry == GeomParams::identity() {
        (image.clone(), labels.clone())
    } else {
        let field = build_displacement_field(&geometry, image.dims(), image.spacing())?;
        (warp_volume(image, &field)?, warp_labels(labels, &field)?)
    };

    let jitter = if config.jitter.enabled {
        sample_jitter(rng, &config.jitter_ranges())
    } else {
        IntensityJitterParams::identity()
    };
    let post_cda = intensity_jitter(&warped, jitter)?;

    if !config.src.enabled {
        return Ok(AugmentTrace {
            image: post_cda.clone(),
            labels: warped_labels,
            post_cda,
            geometry,
            jitter,
            alpha: None,
        });
    }

    let nets: LabelNets = warped_labels
        .label_set()
        .iter()
        .map(|&l| (l, sample_randconv(rng)))
        .collect();
    let alpha = match config.src.alpha_mode {
        AlphaMode::Uniform => rng.random::<f64>(),
        AlphaMode::Fixed => config.src.alpha,
    };
    let maps = smooth_masks(&warped_labels, &config.src.kernel)?;
    let augmented = src_blend(&post_cda, &maps, &nets)?;
    let mixed = mix_with_original(&augmented, &post_cda, alpha)?;
    let image = renormalize_frobenius(&mixed, &post_cda)?;

    Ok(AugmentTrace {
        image,
        labels: warped_labels,
        post_cda,
        geometry,
        jitter,
        alpha: Some(alpha),
    })
}
