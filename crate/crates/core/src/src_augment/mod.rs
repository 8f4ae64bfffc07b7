//! Label-aware random convolution augmentation.
//!
//! Every label region gets its own untrained random convolution network; the
//! per-label outputs are merged with Gaussian-smoothed label masks so that
//! region borders do not show artificial contrast.

mod blend;
mod pipeline;
mod randconv;

pub use blend::{
    mix_with_original, renormalize_frobenius, smooth_masks, src_binary, src_blend, BlendMaps, GaussianKernelSpec, LabelNets,
};
pub use pipeline::{augment_sample, augment_sample_traced, AlphaMode, AugmentConfig, AugmentTrace, JitterConfig, SrcConfig};
pub use randconv::{apply_randconv, leaky_relu, sample_randconv, ConvLayer, RandConvNet, CHANNEL_PLAN, LEAKY_SLOPE};
