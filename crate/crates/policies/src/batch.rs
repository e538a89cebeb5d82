//! Frames to model inputs, shared by training and inference.

use candle_core::{DType, Device, Tensor};

use crate::act::{ActBatch, ActConfig};
use crate::data::{image_batches, point_batch, Frame, Normalization};
use crate::error::{Error, Result};

pub const DTYPE: DType = DType::F32;

fn normalized_proprio(frames: &[&Frame], norm: &Normalization) -> Vec<f32> {
    frames
        .iter()
        .flat_map(|f| norm.proprio.normalize(&f.proprio))
        .collect()
}

/// `[B, k, A]` normalized chunks.
pub fn chunk_tensor(chunks: &[Vec<&[f32]>], norm: &Normalization, dev: &Device) -> Result<Tensor> {
    let b = chunks.len();
    let k = chunks.first().map_or(0, Vec::len);
    let a = norm.action.dim();
    let data: Vec<f32> = chunks
        .iter()
        .flat_map(|c| c.iter().flat_map(|row| norm.action.normalize(row)))
        .collect();
    if data.len() != b * k * a {
        return Err(Error::shape("ragged action chunks"));
    }
    Ok(Tensor::from_vec(data, (b, k, a), dev)?.to_dtype(DTYPE)?)
}

pub fn act_batch(
    config: &ActConfig,
    frames: &[&Frame],
    chunks: Option<&[Vec<&[f32]>]>,
    norm: &Normalization,
    dev: &Device,
) -> Result<ActBatch> {
    let b = frames.len();
    let proprio = Tensor::from_vec(
        normalized_proprio(frames, norm),
        (b, config.proprio_dim),
        dev,
    )?;
    let points = match &norm.points {
        Some(pn) if config.space == surgbench_core::ObservationSpace::PointCloud => {
            Some(point_batch(frames, pn, DTYPE, dev)?)
        }
        _ => None,
    };
    Ok(ActBatch {
        images: image_batches(frames, config.image_size, DTYPE, dev)?,
        points,
        proprio,
        actions: chunks.map(|c| chunk_tensor(c, norm, dev)).transpose()?,
    })
}

/// `[B, h, N, 3]` points and `[B, h, P]` proprio from per-sample histories.
pub fn history_tensors(
    histories: &[Vec<&Frame>],
    norm: &Normalization,
    dev: &Device,
) -> Result<(Tensor, Tensor)> {
    let b = histories.len();
    let h = histories.first().map_or(0, Vec::len);
    let flat: Vec<&Frame> = histories.iter().flatten().copied().collect();
    let pn = norm
        .points
        .as_ref()
        .ok_or_else(|| Error::config("model has no point normalization"))?;
    let pts = point_batch(&flat, pn, DTYPE, dev)?;
    let (_, n, _) = pts.dims3()?;
    let proprio = normalized_proprio(&flat, norm);
    let p = proprio.len() / flat.len().max(1);
    Ok((
        pts.reshape((b, h, n, 3))?,
        Tensor::from_vec(proprio, (b, h, p), dev)?,
    ))
}
