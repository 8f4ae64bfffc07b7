//! Per-label combination of random-convolution outputs.
//!
//! Binary masks give a hard piecewise image; Gaussian-smoothed masks
//! (renormalised to sum to one at every voxel) blend neighbouring regions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::randconv::{apply_randconv, RandConvNet};
use crate::error::{Error, Result};
use crate::volume::{linear_index, Dims, LabelMap, Volume};

/// One random-convolution net per label value.
pub type LabelNets = BTreeMap<u16, RandConvNet>;

/// Discrete isotropic Gaussian on a cubic `size`³ support, normalised to sum 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianKernelSpec {
    /// voxels
    pub sigma: f64,
    /// odd side length in voxels
    pub size: usize,
}

impl Default for GaussianKernelSpec {
    fn default() -> Self {
        Self { sigma: 1.0, size: 5 }
    }
}

impl GaussianKernelSpec {
    /// The 1-voxel kernel: smoothing becomes the identity.
    pub fn identity() -> Self {
        Self { sigma: 1.0, size: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size % 2 == 1 && self.sigma.is_finite() && self.sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gaussian kernel needs odd size and positive sigma, got {self:?}"
            )))
        }
    }

    /// Normalised 1D profile; the 3D kernel is its triple outer product.
    pub fn weights_1d(&self) -> Vec<f64> {
        let r = (self.size / 2) as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Dense `size`³ weights, x fastest.
    pub fn weights_3d(&self) -> Vec<f64> {
        let w = self.weights_1d();
        let mut out = Vec::with_capacity(w.len().pow(3));
        for wz in &w {
            for wy in &w {
                for wx in &w {
                    out.push(wx * wy * wz);
                }
            }
        }
        out
    }
}

/// Zero-padded separable convolution along all three axes.
fn convolve_separable(data: &[f64], dims: Dims, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let n = dims[axis] as i64;
        let plane = dims[0] * dims[1];
        let src = &cur;
        let mut next = vec![0.0; cur.len()];
        next.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let idx = linear_index(dims, x, y, z);
                    let pos = [x, y, z][axis] as i64;
                    let mut acc = 0.0;
                    for (t, w) in kernel.iter().enumerate() {
                        let off = t as i64 - r;
                        let p = pos + off;
                        if p < 0 || p >= n {
                            continue;
                        }
                        let j = (idx as i64 + off * stride as i64) as usize;
                        acc += w * src[j];
                    }
                    slab[x + dims[0] * y] = acc;
                }
            }
        });
        cur = next;
    }
    cur
}

/// Per-label weight fields forming a partition of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMaps {
    dims: Dims,
    labels: Vec<u16>,
    maps: Vec<Vec<f32>>,
}

impl BlendMaps {
    /// Unsmoothed indicator maps.
    pub fn hard(labels: &LabelMap) -> Self {
        let set = labels.label_set().to_vec();
        let maps = set
            .iter()
            .map(|&c| labels.labels().iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            dims: labels.dims(),
            labels: set,
            maps,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn map(&self, label: u16) -> Option<&[f32]> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| self.maps[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u16, &[f32])> {
        self.labels.iter().copied().zip(self.maps.iter().map(Vec::as_slice))
    }
}

/// Smooths each binary label mask with `kernel` (zero padding), then divides
/// every voxel by the sum over labels so the maps sum to one everywhere,
/// including at the volume border.
pub fn smooth_masks(labels: &LabelMap, kernel: &GaussianKernelSpec) -> Result<BlendMaps> {
    kernel.validate()?;
    let dims = labels.dims();
    let set = labels.label_set().to_vec();
    let w = kernel.weights_1d();
    let raw: Vec<Vec<f64>> = set
        .par_iter()
        .map(|&c| {
            let mask: Vec<f64> = labels.labels().iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            convolve_separable(&mask, dims, &w)
        })
        .collect();
    let n = labels.len();
    let mut maps = vec![vec![0.0f32; n]; set.len()];
    for p in 0..n {
        let total: f64 = raw.iter().map(|m| m[p]).sum();
        for (map, r) in maps.iter_mut().zip(&raw) {
            map[p] = (r[p] / total) as f32;
        }
    }
    Ok(BlendMaps { dims, labels: set, maps })
}

fn run_nets(vol: &Volume, labels: &[u16], nets: &LabelNets) -> Result<Vec<Volume>> {
    let selected = labels
        .iter()
        .map(|l| nets.get(l).ok_or(Error::MissingNet(*l)))
        .collect::<Result<Vec<_>>>()?;
    selected.par_iter().map(|net| apply_randconv(net, vol)).collect()
}

/// Hard piecewise augmentation: voxel `p` takes the output of its own
/// label's net.
pub fn src_binary(vol: &Volume, labels: &LabelMap, nets: &LabelNets) -> Result<Volume> {
    labels.same_grid(vol.dims())?;
    let set = labels.label_set();
    let outputs = run_nets(vol, set, nets)?;
    let mut slot = vec![usize::MAX; 1 << 16];
    for (i, &l) in set.iter().enumerate() {
        slot[usize::from(l)] = i;
    }
    let data = labels
        .labels()
        .iter()
        .enumerate()
        .map(|(p, &l)| outputs[slot[usize::from(l)]].data()[p])
        .collect();
    Ok(Volume::from_parts(vol.dims(), vol.spacing(), data))
}

/// Weighted sum of per-label net outputs under `maps`.
pub fn src_blend(vol: &Volume, maps: &BlendMaps, nets: &LabelNets) -> Result<Volume> {
    if maps.dims != vol.dims() {
        return Err(Error::DimMismatch {
            left: vol.dims(),
            right: maps.dims,
        });
    }
    let net_labels: Vec<u16> = nets.keys().copied().collect();
    if net_labels != maps.labels {
        return Err(Error::LabelSetMismatch {
            maps: maps.labels.clone(),
            nets: net_labels,
        });
    }
    let outputs = run_nets(vol, &maps.labels, nets)?;
    let data = (0..vol.len())
        .map(|p| {
            let mut acc = 0.0f64;
            for (map, out) in maps.maps.iter().zip(&outputs) {
                acc += f64::from(map[p]) * f64::from(out.data()[p]);
            }
            acc as f32
        })
        .collect();
    Volume::checked(vol.dims(), vol.spacing(), data)
}

/// `alpha * aug + (1 - alpha) * orig`.
pub fn mix_with_original(aug: &Volume, orig: &Volume, alpha: f64) -> Result<Volume> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    aug.same_grid(orig.dims())?;
    let data = aug
        .data()
        .iter()
        .zip(orig.data())
        .map(|(&a, &o)| (alpha * f64::from(a) + (1.0 - alpha) * f64::from(o)) as f32)
        .collect();
    Volume::checked(aug.dims(), aug.spacing(), data)
}

/// Rescales `x` to the Frobenius norm of `reference`.
pub fn renormalize_frobenius(x: &Volume, reference: &Volume) -> Result<Volume> {
    let nx = x.frobenius_norm();
    let nr = reference.frobenius_norm();
    if nx == 0.0 {
        return if nr == 0.0 { Ok(x.clone()) } else { Err(Error::ZeroNorm) };
    }
    let k = nr / nx;
    x.map(|v| (f64::from(v) * k) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::src_augment::randconv::sample_randconv;
    use crate::volume::{make_phantom, PhantomSpec, ShapeMode, TissueIntensity};
    use rand::Rng as _;

    fn phantom(seed: u64, n_labels: usize, dims: Dims) -> (Volume, LabelMap) {
        make_phantom(&PhantomSpec {
            seed,
            dims,
            spacing: [1.0; 3],
            n_labels,
            shape_mode: ShapeMode::Blobs,
            intensity_table: (0..n_labels)
                .map(|l| TissueIntensity {
                    mean: 0.2 * l as f64,
                    std: 0.05,
                })
                .collect(),
        })
        .unwrap()
    }

    fn nets_for(labels: &LabelMap, seed: u64) -> LabelNets {
        let mut g = rng::seeded(seed);
        labels.label_set().iter().map(|&l| (l, sample_randconv(&mut g))).collect()
    }

    /// Net with every kernel of size 1 whose composite map is `x -> a * x`
    /// for non-negative `x`, when `a >= 0`.
    fn scalar_net(a: f32) -> RandConvNet {
        RandConvNet::from_fn(1, |l, o, i, _| match (l, o, i) {
            (0, 0, 0) => a,
            (_, 0, 0) => 1.0,
            _ => 0.0,
        })
        .unwrap()
    }

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let k = GaussianKernelSpec::default();
        let w = k.weights_3d();
        assert_eq!(w.len(), 125);
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-7);
        assert!(w.iter().all(|&v| v >= 0.0));
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let v = w[x + 5 * (y + 5 * z)];
                    assert_eq!(v, w[(4 - x) + 5 * (y + 5 * z)]);
                    assert_eq!(v, w[x + 5 * ((4 - y) + 5 * z)]);
                    assert_eq!(v, w[x + 5 * (y + 5 * (4 - z))]);
                }
            }
        }
        // separable: kernel equals direct exp(-r^2 / 2) normalised
        let direct: Vec<f64> = (0..125)
            .map(|i| {
                let (x, y, z) = ((i % 5) as f64 - 2.0, ((i / 5) % 5) as f64 - 2.0, (i / 25) as f64 - 2.0);
                (-(x * x + y * y + z * z) / 2.0).exp()
            })
            .collect();
        let total: f64 = direct.iter().sum();
        for (a, b) in w.iter().zip(&direct) {
            assert!((a - b / total).abs() < 1e-15);
        }
    }

    #[test]
    fn single_label_map_is_one() {
        let labels = LabelMap::new([6, 5, 4], [1.0; 3], vec![3; 120]).unwrap();
        let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
        assert_eq!(maps.labels(), &[3]);
        assert!(maps.map(3).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_space_profile_matches_gaussian_cdf() {
        let dims = [16, 7, 6];
        let labels = LabelMap::from_fn(dims, [1.0; 3], |x, _, _| u16::from(x >= 8)).unwrap();
        let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
        // discrete Gaussian CDF: share of the 1D kernel that lands on x >= 8
        let g: Vec<f64> = (-2i32..=2).map(|i| (-(i * i) as f64 / 2.0).exp()).collect();
        let gs: f64 = g.iter().sum();
        let profile = |x: i32| -> f64 { (-2i32..=2).filter(|o| x + o >= 8).map(|o| g[(o + 2) as usize] / gs).sum() };
        let m1 = maps.map(1).unwrap();
        let m0 = maps.map(0).unwrap();
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = linear_index(dims, x, y, z);
                    assert!((f64::from(m1[p]) - profile(x as i32)).abs() < 1e-6, "x={x}");
                    if x <= 4 {
                        assert_eq!((m0[p], m1[p]), (1.0, 0.0));
                    }
                    if x >= 11 {
                        assert_eq!((m0[p], m1[p]), (0.0, 1.0));
                    }
                }
            }
        }
        // the interface plane sits between x = 7 and x = 8, where the two
        // sides mirror each other around 0.5
        let p7 = linear_index(dims, 7, 3, 3);
        let p8 = linear_index(dims, 8, 3, 3);
        assert!((m1[p7] + m1[p8] - 1.0).abs() < 1e-6);
        assert!((0.5 * (m1[p7] + m1[p8]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn partition_of_unity_on_random_maps() {
        for seed in 0..5 {
            let (_, labels) = phantom(seed, 2 + seed as usize, [17, 13, 11]);
            let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
            for p in 0..labels.len() {
                let s: f64 = maps.iter().map(|(_, m)| f64::from(m[p])).sum();
                assert!((s - 1.0).abs() <= 1e-5);
                assert!(maps.iter().all(|(_, m)| (0.0..=1.0).contains(&m[p])));
            }
        }
    }

    #[test]
    fn identity_kernel_gives_hard_maps() {
        let (_, labels) = phantom(3, 4, [12, 12, 12]);
        let smooth = smooth_masks(&labels, &GaussianKernelSpec::identity()).unwrap();
        assert_eq!(smooth, BlendMaps::hard(&labels));
    }

    #[test]
    fn single_label_collapses_bitwise() {
        let mut r = rng::seeded(2);
        let vol = Volume::from_fn([8, 7, 6], [1.0; 3], |_, _, _| r.random_range(-1.0f32..1.0)).unwrap();
        let labels = LabelMap::new(vol.dims(), [1.0; 3], vec![0; vol.len()]).unwrap();
        let nets = nets_for(&labels, 9);
        let direct = apply_randconv(&nets[&0], &vol).unwrap();
        let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
        assert_eq!(src_binary(&vol, &labels, &nets).unwrap(), direct);
        assert_eq!(src_blend(&vol, &maps, &nets).unwrap(), direct);
    }

    #[test]
    fn identical_nets_collapse() {
        let (vol, labels) = phantom(5, 5, [14, 12, 10]);
        let net = sample_randconv(&mut rng::seeded(77));
        let nets: LabelNets = labels.label_set().iter().map(|&l| (l, net.clone())).collect();
        let direct = apply_randconv(&net, &vol).unwrap();
        assert_eq!(src_binary(&vol, &labels, &nets).unwrap(), direct);
        let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
        let blended = src_blend(&vol, &maps, &nets).unwrap();
        let scale = direct.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        for (a, b) in blended.data().iter().zip(direct.data()) {
            assert!((a - b).abs() <= 1e-5 * scale.max(1.0));
        }
    }

    #[test]
    fn binary_with_constant_outputs() {
        let dims = [6, 6, 6];
        let vol = Volume::filled(dims, [1.0; 3], 1.0).unwrap();
        let labels = LabelMap::from_fn(dims, [1.0; 3], |x, _, _| u16::from(x >= 3)).unwrap();
        let nets: LabelNets = [(0, scalar_net(2.5)), (1, scalar_net(0.5))].into();
        let out = src_binary(&vol, &labels, &nets).unwrap();
        for (v, l) in out.data().iter().zip(labels.labels()) {
            assert_eq!(*v, if *l == 0 { 2.5 } else { 0.5 });
        }
    }

    #[test]
    fn hard_blend_equals_binary() {
        for seed in 0..4 {
            let (vol, labels) = phantom(seed, 4, [12, 11, 10]);
            let nets = nets_for(&labels, seed + 100);
            let binary = src_binary(&vol, &labels, &nets).unwrap();
            assert_eq!(src_blend(&vol, &BlendMaps::hard(&labels), &nets).unwrap(), binary);
        }
    }

    #[test]
    fn blending_softens_borders() {
        // constant input, two constant-output nets: binary output is a step
        let dims = [20, 6, 6];
        let vol = Volume::filled(dims, [1.0; 3], 1.0).unwrap();
        let labels = LabelMap::from_fn(dims, [1.0; 3], |x, _, _| u16::from(x >= 10)).unwrap();
        for (a, b) in [(3.0, 0.2), (0.1, 4.0), (1.0, 1.5)] {
            let nets: LabelNets = [(0, scalar_net(a)), (1, scalar_net(b))].into();
            let binary = src_binary(&vol, &labels, &nets).unwrap();
            let maps = smooth_masks(&labels, &GaussianKernelSpec::default()).unwrap();
            let blended = src_blend(&vol, &maps, &nets).unwrap();
            let second = |v: &Volume, y: usize, z: usize| -> f32 {
                (1..dims[0] - 1)
                    .map(|x| (v.get(x - 1, y, z) - 2.0 * v.get(x, y, z) + v.get(x + 1, y, z)).abs())
                    .fold(0.0, f32::max)
            };
            for (y, z) in [(0, 0), (3, 2), (5, 5)] {
                assert!(second(&blended, y, z) <= second(&binary, y, z));
                assert!(second(&blended, y, z) < 0.5 * (a - b).abs());
            }
        }
    }

    #[test]
    fn missing_and_mismatched_nets() {
        let (vol, labels) = phantom(1, 3, [10, 10, 10]);
        let mut nets = nets_for(&labels, 1);
        nets.remove(&2);
        assert!(matches!(src_binary(&vol, &labels, &nets), Err(Error::MissingNet(2))));
        let maps = BlendMaps::hard(&labels);
        assert!(matches!(src_blend(&vol, &maps, &nets), Err(Error::LabelSetMismatch { .. })));
    }

    #[test]
    fn mixing_fixtures() {
        let aug = Volume::filled([2, 2, 2], [1.0; 3], 2.0).unwrap();
        let orig = Volume::filled([2, 2, 2], [1.0; 3], 0.0).unwrap();
        assert_eq!(mix_with_original(&aug, &orig, 0.0).unwrap(), orig);
        assert_eq!(mix_with_original(&aug, &orig, 1.0).unwrap(), aug);
        assert!(mix_with_original(&aug, &orig, 0.5).unwrap().data().iter().all(|&v| v == 1.0));
        assert!(matches!(mix_with_original(&aug, &orig, 1.5), Err(Error::AlphaOutOfRange(_))));
        let other = Volume::filled([2, 2, 3], [1.0; 3], 0.0).unwrap();
        assert!(matches!(mix_with_original(&aug, &other, 0.5), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn frobenius_fixtures() {
        let x = Volume::new([2, 1, 1], [1.0; 3], vec![3.0, 4.0]).unwrap();
        let r = Volume::new([2, 1, 1], [1.0; 3], vec![6.0, 8.0]).unwrap();
        assert_eq!(renormalize_frobenius(&x, &r).unwrap().data(), &[6.0, 8.0]);
        assert_eq!(renormalize_frobenius(&x, &x).unwrap(), x);
        let zero = Volume::filled([2, 1, 1], [1.0; 3], 0.0).unwrap();
        assert!(matches!(renormalize_frobenius(&zero, &r), Err(Error::ZeroNorm)));
        assert_eq!(renormalize_frobenius(&zero, &zero).unwrap(), zero);

        let mut g = rng::seeded(12);
        for _ in 0..5 {
            let a = Volume::from_fn([9, 8, 7], [1.0; 3], |_, _, _| g.random_range(-5.0f32..5.0)).unwrap();
            let b = Volume::from_fn([9, 8, 7], [1.0; 3], |_, _, _| g.random_range(-0.1f32..0.3)).unwrap();
            let out = renormalize_frobenius(&a, &b).unwrap();
            let rel = (out.frobenius_norm() - b.frobenius_norm()).abs() / b.frobenius_norm();
            assert!(rel <= 1e-6);
        }
    }
}
