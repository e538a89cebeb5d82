//! ResNet-18 image encoder.
//!
//! Batch norm is replaced by group norm, which behaves the same at batch size
//! one and needs no running statistics. The stem pool is 2×2 so the backward
//! pass is available; the overall stride stays 32.

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{conv2d, conv2d_no_bias, group_norm, Conv2d, Conv2dConfig, GroupNorm, VarBuilder};
use surgbench_core::perception::RgbImage;

use crate::error::{Error, Result};
use crate::nn::sinusoidal_2d;
use crate::FeatureEmbedding;

pub const STRIDE: usize = 32;

fn groups_for(channels: usize) -> usize {
    (1..=8)
        .rev()
        .find(|g| channels.is_multiple_of(*g))
        .unwrap_or(1)
}

fn norm(channels: usize, vb: VarBuilder) -> candle_core::Result<GroupNorm> {
    group_norm(groups_for(channels), channels, 1e-5, vb)
}

fn conv(
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    vb: VarBuilder,
) -> candle_core::Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride,
        ..Default::default()
    };
    conv2d_no_bias(cin, cout, k, cfg, vb)
}

#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: Conv2d,
    norm1: GroupNorm,
    conv2: Conv2d,
    norm2: GroupNorm,
    shortcut: Option<(Conv2d, GroupNorm)>,
}

impl BasicBlock {
    fn new(cin: usize, cout: usize, stride: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let shortcut = if stride != 1 || cin != cout {
            Some((
                conv(cin, cout, 1, stride, vb.pp("down_conv"))?,
                norm(cout, vb.pp("down_norm"))?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: conv(cin, cout, 3, stride, vb.pp("conv1"))?,
            norm1: norm(cout, vb.pp("norm1"))?,
            conv2: conv(cout, cout, 3, 1, vb.pp("conv2"))?,
            norm2: norm(cout, vb.pp("norm2"))?,
            shortcut,
        })
    }
}

impl Module for BasicBlock {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.norm1.forward(&self.conv1.forward(x)?)?.relu()?;
        let h = self.norm2.forward(&self.conv2.forward(&h)?)?;
        let skip = match &self.shortcut {
            Some((c, n)) => n.forward(&c.forward(x)?)?,
            None => x.clone(),
        };
        (h + skip)?.relu()
    }
}

/// The 18-layer backbone: a stem plus four stages of two basic blocks.
#[derive(Clone, Debug)]
pub struct ResNet18 {
    stem: Conv2d,
    stem_norm: GroupNorm,
    blocks: Vec<BasicBlock>,
    pub out_channels: usize,
}

impl ResNet18 {
    pub fn new(in_channels: usize, width: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let stem = conv(in_channels, width, 7, 2, vb.pp("stem"))?;
        let stem_norm = norm(width, vb.pp("stem_norm"))?;
        let mut blocks = Vec::new();
        let mut cin = width;
        for stage in 0..4 {
            let cout = width << stage;
            for b in 0..2 {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(
                    cin,
                    cout,
                    stride,
                    vb.pp(format!("layer{}.{b}", stage + 1)),
                )?);
                cin = cout;
            }
        }
        Ok(Self {
            stem,
            stem_norm,
            blocks,
            out_channels: cin,
        })
    }
}

impl Module for ResNet18 {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut h = self
            .stem_norm
            .forward(&self.stem.forward(x)?)?
            .relu()?
            .max_pool2d(2)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        Ok(h)
    }
}

/// One camera view's encoder: backbone, then a 1×1 projection to the model
/// width, flattened to tokens with 2-D sinusoidal positions.
///
/// With `coords` set, two channels holding the normalized pixel column and
/// row are appended to the image. Each token covers a 32-pixel cell, and the
/// extra channels let the backbone report where inside its cell a feature
/// lies.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    backbone: ResNet18,
    proj: Conv2d,
    size: usize,
    dim: usize,
    coords: Option<Tensor>,
}

impl ImageEncoder {
    pub fn new(
        size: usize,
        width: usize,
        dim: usize,
        coords: bool,
        vb: VarBuilder,
    ) -> Result<Self> {
        if size == 0 || !size.is_multiple_of(STRIDE) {
            return Err(Error::config(format!(
                "image size {size} must be a positive multiple of {STRIDE}"
            )));
        }
        let backbone = ResNet18::new(if coords { 5 } else { 3 }, width, vb.pp("backbone"))?;
        let proj = conv2d(
            backbone.out_channels,
            dim,
            1,
            Default::default(),
            vb.pp("proj"),
        )?;
        let coords = if coords {
            let ramp: Vec<f32> = (0..size)
                .map(|i| 2.0 * (i as f32 + 0.5) / size as f32 - 1.0)
                .collect();
            let dev = vb.device();
            let cols = Tensor::new(ramp.as_slice(), dev)?
                .reshape((1, 1, 1, size))?
                .broadcast_as((1, 1, size, size))?;
            let rows = Tensor::new(ramp.as_slice(), dev)?
                .reshape((1, 1, size, 1))?
                .broadcast_as((1, 1, size, size))?;
            Some(Tensor::cat(&[&cols, &rows], 1)?.to_dtype(vb.dtype())?)
        } else {
            None
        };
        Ok(Self {
            backbone,
            proj,
            size,
            dim,
            coords,
        })
    }

    pub fn num_tokens(&self) -> usize {
        (self.size / STRIDE).pow(2)
    }

    /// `images` is `[B, 3, size, size]`.
    pub fn forward(&self, images: &Tensor) -> Result<FeatureEmbedding> {
        let dims = images.dims();
        if dims.len() != 4 || dims[1] != 3 || dims[2] != self.size || dims[3] != self.size {
            return Err(Error::shape(format!(
                "expected [B, 3, {s}, {s}] images, got {dims:?}",
                s = self.size
            )));
        }
        let input = match &self.coords {
            Some(c) => {
                let b = dims[0];
                Tensor::cat(&[images, &c.broadcast_as((b, 2, self.size, self.size))?], 1)?
            }
            None => images.clone(),
        };
        let fmap = self.proj.forward(&self.backbone.forward(&input)?)?;
        let (b, d, h, w) = fmap.dims4()?;
        let tokens = fmap.reshape((b, d, h * w))?.transpose(1, 2)?.contiguous()?;
        let pos = sinusoidal_2d(h, w, self.dim, images.dtype(), images.device())?;
        Ok(FeatureEmbedding {
            tokens,
            pos,
            pooled: None,
        })
    }
}

/// Stack images into `[B, 3, H, W]`, scaled to roughly zero mean and unit
/// spread.
pub fn images_to_tensor(
    images: &[&RgbImage],
    size: usize,
    dtype: DType,
    dev: &Device,
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * 3 * size * size);
    for img in images {
        if img.width as usize != size || img.height as usize != size {
            return Err(Error::shape(format!(
                "image is {}x{}, encoder expects {size}x{size}",
                img.width, img.height
            )));
        }
        for c in 0..3 {
            data.extend(
                img.data
                    .iter()
                    .skip(c)
                    .step_by(3)
                    .map(|v| (f32::from(*v) / 255.0 - 0.5) / 0.25),
            );
        }
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, size, size), dev)?.to_dtype(dtype)?)
}
