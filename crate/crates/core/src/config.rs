//! Pipeline configuration, read from a single TOML document.
//!
//! Every field has a default, so an empty file is a complete configuration.
//!
//! ```toml
//! modality = "ct"
//! seed = 7
//!
//! [geometry]
//! translation = 20.0
//! rotation = 0.35
//! scale = [0.8, 1.2]
//! elastic = 15.0
//!
//! [jitter]
//! enabled = true
//!
//! [src]
//! enabled = true
//! alpha_mode = "uniform"
//! kernel = { sigma = 1.0, size = 5 }
//!
//! [sm]
//! n_bins = 2048
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment_geom::GeomRanges;
use crate::error::{Error, Result};
use crate::source_match::{SMConfig, DEFAULT_BINS};
use crate::src_augment::{AugmentConfig, JitterConfig, SrcConfig};
use crate::volume::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmSection {
    pub n_bins: usize,
    /// modality clip range when absent
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl Default for SmSection {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub geometry: GeomRanges,
    pub jitter: JitterConfig,
    pub src: SrcConfig,
    pub sm: SmSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            modality: Modality::Ct,
            seed: None,
            geometry: GeomRanges::default(),
            jitter: JitterConfig::default(),
            src: SrcConfig::default(),
            sm: SmSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.augment().validate()?;
        self.sm().validate()
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            modality: self.modality,
            geometry: self.geometry,
            jitter: self.jitter,
            src: self.src,
        }
    }

    pub fn sm(&self) -> SMConfig {
        let default = SMConfig::new(self.modality);
        SMConfig {
            n_bins: self.sm.n_bins,
            range: self.sm.range.unwrap_or(default.range),
            ..default
        }
    }
}
