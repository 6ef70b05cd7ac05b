use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsample {
    MaxPool,
    AvgPool,
}

/// Architecture knobs. Feature grids are `image_size / 8` (after block 3) and
/// `image_size / 16` (after block 4).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub channels: [usize; 4],
    pub num_classes: usize,
    pub aspect_ratios: Vec<f64>,
    /// Anchor side (fraction of the image) on the fine and coarse grid.
    pub anchor_scales: [f64; 2],
    pub activation: Activation,
    pub leaky_slope: f64,
    pub downsample: Downsample,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_size: 96,
            in_channels: 3,
            channels: [8, 16, 32, 32],
            num_classes: 3,
            aspect_ratios: vec![1.0, 2.0, 0.5],
            anchor_scales: [0.33, 0.56],
            activation: Activation::LeakyRelu,
            leaky_slope: 0.1,
            downsample: Downsample::MaxPool,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 || !self.image_size.is_multiple_of(16) {
            return Err(Error::Config("image_size must be a positive multiple of 16".into()));
        }
        if self.channels.contains(&0) || self.in_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.aspect_ratios.is_empty() || self.aspect_ratios.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("aspect ratios must be non-empty and positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        Ok(())
    }

    pub fn grids(&self) -> [usize; 2] {
        [self.image_size / 8, self.image_size / 16]
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.aspect_ratios.len()
    }

    pub fn num_anchors(&self) -> usize {
        let [g1, g2] = self.grids();
        (g1 * g1 + g2 * g2) * self.anchors_per_cell()
    }

    /// Class logits per anchor, background included.
    pub fn num_logits(&self) -> usize {
        self.num_classes + 1
    }
}

/// Layer groups used for partial retraining; ordinals increase with depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Block1,
    Block2,
    Block3,
    Block4,
    Heads,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Block1, Layer::Block2, Layer::Block3, Layer::Block4, Layer::Heads];

    pub fn ordinal(self) -> usize {
        self as usize + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Block1 => "block1",
            Layer::Block2 => "block2",
            Layer::Block3 => "block3",
            Layer::Block4 => "block4",
            Layer::Heads => "heads",
        }
    }

    pub fn parse(s: &str) -> Result<Layer> {
        Layer::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown layer '{s}' (expected one of block1, block2, block3, block4, heads)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorInfo {
    pub name: &'static str,
    pub layer: Layer,
    pub shape: Vec<usize>,
}

// Fixed tensor order; `net.rs` indexes by these constants.
pub(crate) const B1_W: usize = 0;
pub(crate) const H1_CLS_W: usize = 8;
pub(crate) const H1_BOX_W: usize = 10;
pub(crate) const H2_CLS_W: usize = 12;
pub(crate) const H2_BOX_W: usize = 14;
pub(crate) const NUM_TENSORS: usize = 16;

pub(crate) fn block_weight(b: usize) -> usize {
    B1_W + 2 * b
}

fn tensor_layout(arch: &ArchConfig) -> Vec<TensorInfo> {
    let [c1, c2, c3, c4] = arch.channels;
    let a = arch.anchors_per_cell();
    let k = arch.num_logits();
    let mut v = Vec::with_capacity(NUM_TENSORS);
    let blocks = [
        ("block1", Layer::Block1, arch.in_channels, c1),
        ("block2", Layer::Block2, c1, c2),
        ("block3", Layer::Block3, c2, c3),
        ("block4", Layer::Block4, c3, c4),
    ];
    const BLOCK_NAMES: [(&str, &str); 4] = [
        ("block1.conv.weight", "block1.conv.bias"),
        ("block2.conv.weight", "block2.conv.bias"),
        ("block3.conv.weight", "block3.conv.bias"),
        ("block4.conv.weight", "block4.conv.bias"),
    ];
    for (i, (_, layer, cin, cout)) in blocks.into_iter().enumerate() {
        v.push(TensorInfo { name: BLOCK_NAMES[i].0, layer, shape: vec![cout, cin, 3, 3] });
        v.push(TensorInfo { name: BLOCK_NAMES[i].1, layer, shape: vec![cout] });
    }
    let heads = [
        ("head1.cls.weight", "head1.cls.bias", "head1.box.weight", "head1.box.bias", c3),
        ("head2.cls.weight", "head2.cls.bias", "head2.box.weight", "head2.box.bias", c4),
    ];
    for (cw, cb, bw, bb, cin) in heads {
        v.push(TensorInfo { name: cw, layer: Layer::Heads, shape: vec![a * k, cin, 3, 3] });
        v.push(TensorInfo { name: cb, layer: Layer::Heads, shape: vec![a * k] });
        v.push(TensorInfo { name: bw, layer: Layer::Heads, shape: vec![a * 4, cin, 3, 3] });
        v.push(TensorInfo { name: bb, layer: Layer::Heads, shape: vec![a * 4] });
    }
    debug_assert_eq!(v.len(), NUM_TENSORS);
    v
}

/// Named parameter tensors of the detector. The same container holds
/// gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams<T> {
    pub arch: ArchConfig,
    pub(crate) info: Vec<TensorInfo>,
    pub(crate) tensors: Vec<Vec<T>>,
}

impl<T: Real> DetectorParams<T> {
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let info = tensor_layout(arch);
        let tensors = info
            .iter()
            .map(|t| vec![T::zero(); t.shape.iter().product()])
            .collect();
        Ok(Self {
            arch: arch.clone(),
            info,
            tensors,
        })
    }

    /// He-normal conv weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = rng_from(seed);
        for (info, data) in p.info.iter().zip(p.tensors.iter_mut()) {
            if info.shape.len() == 4 {
                let fan_in = (info.shape[1] * 9) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
                for v in data.iter_mut() {
                    *v = T::lit(normal.sample(&mut rng));
                }
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            info: self.info.clone(),
            tensors: self.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.info.iter().map(|i| i.name)
    }

    pub fn tensor_info(&self, i: usize) -> (&'static str, Layer, &[usize]) {
        let info = &self.info[i];
        (info.name, info.layer, &info.shape)
    }

    pub fn tensor(&self, i: usize) -> &[T] {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.tensors[i]
    }

    pub fn tensor_by_name(&self, name: &str) -> Option<&[T]> {
        self.info
            .iter()
            .position(|i| i.name == name)
            .map(|i| self.tensors[i].as_slice())
    }

    pub fn tensor_by_name_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let pos = self.info.iter().position(|i| i.name == name)?;
        Some(self.tensors[pos].as_mut_slice())
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flatten()
    }

    pub fn iter_values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.tensors.iter_mut().flatten()
    }

    pub fn all_finite(&self) -> bool {
        self.iter_values().all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }

    pub fn convert<U: Real>(&self) -> DetectorParams<U> {
        DetectorParams {
            arch: self.arch.clone(),
            info: self.info.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|v| U::lit(v.as_f64())).collect())
                .collect(),
        }
    }

    /// Whether tensor `i` is trained when freezing after `k` (`None` trains all).
    pub fn trainable(&self, i: usize, k: Option<Layer>) -> bool {
        k.is_none_or(|k| self.info[i].layer.ordinal() <= k.ordinal())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_param_count_is_desk_scale() {
        let p = DetectorParams::<f32>::init(&ArchConfig::default(), 0).unwrap();
        assert!(p.num_params() < 200_000, "{}", p.num_params());
        assert!(p.all_finite());
        assert_eq!(p.num_tensors(), NUM_TENSORS);
        assert_eq!(ArchConfig::default().num_anchors(), 540);
    }

    #[test]
    fn init_is_seeded() {
        let a = DetectorParams::<f32>::init(&ArchConfig::default(), 3).unwrap();
        let b = DetectorParams::<f32>::init(&ArchConfig::default(), 3).unwrap();
        let c = DetectorParams::<f32>::init(&ArchConfig::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.tensor_by_name("block1.conv.bias").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_names_parse() {
        for l in Layer::ALL {
            assert_eq!(Layer::parse(l.name()).unwrap(), l);
        }
        assert!(Layer::parse("pool3").is_err());
    }
}
