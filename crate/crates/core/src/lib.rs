//! Volumetric augmentation and evaluation toolkit.
//!
//! * [`volume`]: containers, SVOL I/O, modality normalisation, resampling, phantoms
//! * [`augment_geom`]: random affine + elastic warps and global intensity jitter
//! * [`src_augment`]: label-aware random-convolution augmentation with smooth blending
//! * [`source_match`]: cumulative-histogram intensity mapping towards a source domain
//! * [`metrics`]: Dice, surface distances and the generalized Dice loss

pub mod error;
pub mod rng;
pub mod stats;
pub mod volume;
pub mod augment_geom;
pub mod src_augment;
pub mod source_match;
pub mod metrics;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
pub use volume::{LabelMap, Volume};
