//! Untrained four-layer random convolution networks.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::volume::{linear_index, Dims, Volume};

/// `(in, out)` channels of each layer.
pub const CHANNEL_PLAN: [(usize, usize); 4] = [(1, 2), (2, 2), (2, 2), (2, 1)];
pub const LEAKY_SLOPE: f64 = 0.1;
pub const MIN_DIM: usize = 3;

/// One bias-free 3D convolution with a cubic kernel of side 1 or 3.
///
/// Weights are laid out `[out][in][kz][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kernel_size: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f32>,
}

impl ConvLayer {
    pub fn new(kernel_size: usize, in_channels: usize, out_channels: usize, weights: Vec<f32>) -> Result<Self> {
        if kernel_size != 1 && kernel_size != 3 {
            return Err(Error::InvalidNet(format!("kernel size {kernel_size} not in {{1, 3}}")));
        }
        let expected = out_channels * in_channels * kernel_size.pow(3);
        if weights.len() != expected {
            return Err(Error::InvalidNet(format!(
                "layer {in_channels}->{out_channels} k{kernel_size} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidNet("non-finite weight".into()));
        }
        Ok(Self {
            kernel_size,
            in_channels,
            out_channels,
            weights,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Weight for output `o`, input `i`, tap `(kx, ky, kz)`.
    pub fn weight(&self, o: usize, i: usize, kx: usize, ky: usize, kz: usize) -> f32 {
        let k = self.kernel_size;
        self.weights[(((o * self.in_channels + i) * k + kz) * k + ky) * k + kx]
    }

    /// Zero-padded "same" convolution followed by the leaky rectifier.
    fn forward(&self, input: &[Vec<f32>], dims: Dims) -> Vec<Vec<f32>> {
        let k = self.kernel_size as i64;
        let r = k / 2;
        let plane = dims[0] * dims[1];
        (0..self.out_channels)
            .map(|o| {
                let mut out = vec![0.0f32; plane * dims[2]];
                out.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
                    for y in 0..dims[1] {
                        for x in 0..dims[0] {
                            let mut acc = 0.0f64;
                            for (i, channel) in input.iter().enumerate() {
                                for kz in 0..k {
                                    let sz = z as i64 + kz - r;
                                    if sz < 0 || sz >= dims[2] as i64 {
                                        continue;
                                    }
                                    for ky in 0..k {
                                        let sy = y as i64 + ky - r;
                                        if sy < 0 || sy >= dims[1] as i64 {
                                            continue;
                                        }
                                        for kx in 0..k {
                                            let sx = x as i64 + kx - r;
                                            if sx < 0 || sx >= dims[0] as i64 {
                                                continue;
                                            }
                                            let w = self.weight(o, i, kx as usize, ky as usize, kz as usize);
                                            let v = channel[linear_index(dims, sx as usize, sy as usize, sz as usize)];
                                            acc += f64::from(w) * f64::from(v);
                                        }
                                    }
                                }
                            }
                            slab[x + dims[0] * y] = leaky_relu(acc) as f32;
                        }
                    }
                });
                out
            })
            .collect()
    }
}

#[inline]
pub fn leaky_relu(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// Four convolution layers with channel plan 1→2→2→2→1, each followed by a
/// leaky rectifier (slope 0.1). Never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct RandConvNet {
    layers: Vec<ConvLayer>,
}

impl RandConvNet {
    /// Builds a net from explicit layers; the channel plan must match
    /// [`CHANNEL_PLAN`].
    pub fn from_layers(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.len() != CHANNEL_PLAN.len() {
            return Err(Error::InvalidNet(format!("need 4 layers, got {}", layers.len())));
        }
        for (n, (layer, &(cin, cout))) in layers.iter().zip(CHANNEL_PLAN.iter()).enumerate() {
            if layer.in_channels != cin || layer.out_channels != cout {
                return Err(Error::InvalidNet(format!(
                    "layer {n} is {}->{}, expected {cin}->{cout}",
                    layer.in_channels, layer.out_channels
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Net whose layers all use `kernel_size` and take their weights from
    /// `weight(layer, out, in, tap)`.
    pub fn from_fn(kernel_size: usize, mut weight: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        let taps = kernel_size.pow(3);
        let layers = CHANNEL_PLAN
            .iter()
            .enumerate()
            .map(|(l, &(cin, cout))| {
                let mut w = Vec::with_capacity(cout * cin * taps);
                for o in 0..cout {
                    for i in 0..cin {
                        for t in 0..taps {
                            w.push(weight(l, o, i, t));
                        }
                    }
                }
                ConvLayer::new(kernel_size, cin, cout, w)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }
}

/// Fresh net: each layer's kernel size is 1 or 3 with equal probability and
/// every weight is drawn from the standard normal.
pub fn sample_randconv(rng: &mut Rng) -> RandConvNet {
    let layers = CHANNEL_PLAN
        .iter()
        .map(|&(cin, cout)| {
            let k = if rng.random::<bool>() { 3 } else { 1 };
            let weights = (0..cout * cin * k * k * k)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            ConvLayer {
                kernel_size: k,
                in_channels: cin,
                out_channels: cout,
                weights,
            }
        })
        .collect();
    RandConvNet { layers }
}

/// Runs `net` on `vol`; output has the input's geometry.
pub fn apply_randconv(net: &RandConvNet, vol: &Volume) -> Result<Volume> {
    let dims = vol.dims();
    if dims.iter().any(|&d| d < MIN_DIM) {
        return Err(Error::DimsTooSmall { dims, min: MIN_DIM });
    }
    let mut activations = vec![vol.data().to_vec()];
    for layer in &net.layers {
        activations = layer.forward(&activations, dims);
    }
    let out = activations.pop().unwrap_or_default();
    Volume::checked(dims, vol.spacing(), out)
}
