//! PointNet-style set encoder: a shared per-point MLP, then either per-point
//! tokens or a symmetric max-pool. Every per-point op is row-local with a
//! fixed summation order, so the pooled feature is exactly
//! permutation-invariant.

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::VarBuilder;
use surgbench_core::PointCloud;

use crate::error::{Error, Result};
use crate::nn::{sinusoidal_1d, LayerNorm};
use crate::rowlinear::RowLinear;
use crate::FeatureEmbedding;

#[derive(Clone, Debug)]
pub struct PointEncoder {
    layers: Vec<(RowLinear, LayerNorm)>,
    head: RowLinear,
    dim: usize,
}

impl PointEncoder {
    /// `hidden` lists the widths of the shared MLP; `dim` is the output width.
    pub fn new(hidden: &[usize], dim: usize, vb: VarBuilder) -> Result<Self> {
        let mut layers = Vec::new();
        let mut cin = 3;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push((
                RowLinear::new(cin, h, vb.pp(format!("mlp{i}")))?,
                LayerNorm::new(h, vb.pp(format!("norm{i}")))?,
            ));
            cin = h;
        }
        Ok(Self {
            layers,
            head: RowLinear::new(cin, dim, vb.pp("head"))?,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-point features `[B, N, dim]` for points `[B, N, 3]`.
    pub fn per_point(&self, points: &Tensor) -> Result<Tensor> {
        let (_, n, c) = points.dims3()?;
        if n == 0 {
            return Err(Error::Core(surgbench_core::Error::EmptyCloud));
        }
        if c != 3 {
            return Err(Error::shape(format!("points need 3 coordinates, got {c}")));
        }
        let mut h = points.clone();
        for (lin, norm) in &self.layers {
            h = norm.forward(&lin.forward(&h)?)?.relu()?;
        }
        Ok(self.head.forward(&h)?)
    }

    /// Token variant: one token per point, with index positional embeddings.
    pub fn tokens(&self, points: &Tensor) -> Result<FeatureEmbedding> {
        let tokens = self.per_point(points)?;
        let n = tokens.dim(1)?;
        Ok(FeatureEmbedding {
            pos: sinusoidal_1d(n, self.dim, tokens.dtype(), tokens.device())?,
            tokens,
            pooled: None,
        })
    }

    /// Pooled variant: `[B, dim]`, invariant to the order of the points.
    pub fn pooled(&self, points: &Tensor) -> Result<Tensor> {
        Ok(self.per_point(points)?.max(1)?)
    }
}

/// Stack clouds of equal size into `[B, N, 3]`.
pub fn clouds_to_tensor(clouds: &[&PointCloud], dtype: DType, dev: &Device) -> Result<Tensor> {
    let n = clouds.first().map_or(0, |c| c.len());
    if n == 0 {
        return Err(Error::Core(surgbench_core::Error::EmptyCloud));
    }
    if let Some(c) = clouds.iter().find(|c| c.len() != n) {
        return Err(Error::shape(format!(
            "cloud sizes differ: {n} vs {}",
            c.len()
        )));
    }
    let data: Vec<f32> = clouds.iter().flat_map(|c| c.to_f32()).collect();
    Ok(Tensor::from_vec(data, (clouds.len(), n, 3), dev)?.to_dtype(dtype)?)
}
