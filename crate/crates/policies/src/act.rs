//! Action chunking with a conditional VAE and a transformer decoder.

use std::collections::VecDeque;

use candle_core::{Module, Tensor, D};
use candle_nn::{linear, Init, Linear, VarBuilder};
use serde::{Deserialize, Serialize};
use surgbench_core::ObservationSpace;

use crate::error::{Error, Result};
use crate::nn::{sinusoidal_1d, Decoder, Encoder};
use crate::pointnet::PointEncoder;
use crate::resnet::ImageEncoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActConfig {
    pub space: ObservationSpace,
    /// Image streams in the order they are fed to the encoders.
    pub cameras: Vec<String>,
    pub action_dim: usize,
    pub proprio_dim: usize,
    pub image_size: usize,
    pub resnet_width: usize,
    /// Append pixel-coordinate channels to each image.
    pub coord_channels: bool,
    pub num_points: usize,
    pub point_hidden: Vec<usize>,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub cvae_layers: usize,
    /// Chunk length k.
    pub chunk: usize,
    /// Style latent width L.
    pub latent_dim: usize,
    pub kl_weight: f64,
    /// Temporal aggregation decay m.
    pub temporal_decay: f64,
}

impl ActConfig {
    pub fn new(
        space: ObservationSpace,
        cameras: Vec<String>,
        action_dim: usize,
        proprio_dim: usize,
    ) -> Self {
        Self {
            space,
            cameras,
            action_dim,
            proprio_dim,
            image_size: 128,
            resnet_width: 8,
            coord_channels: true,
            num_points: 512,
            point_hidden: vec![64, 128],
            d_model: 64,
            heads: 4,
            ff_dim: 256,
            encoder_layers: 2,
            decoder_layers: 2,
            cvae_layers: 2,
            chunk: 16,
            latent_dim: 32,
            kl_weight: 10.0,
            temporal_decay: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.chunk == 0 {
            return bad("chunk length must be at least 1");
        }
        if self.action_dim == 0 || self.proprio_dim == 0 || self.latent_dim == 0 {
            return bad("action, proprio and latent widths must be positive");
        }
        if self.temporal_decay < 0.0 {
            return bad("temporal decay must be non-negative");
        }
        let cams = self.cameras.len();
        match self.space {
            ObservationSpace::SingleCamera if cams != 1 => {
                bad("single_camera needs exactly one camera")
            }
            ObservationSpace::MultiCamera if cams < 2 => {
                bad("multi_camera needs at least two cameras")
            }
            ObservationSpace::PointCloud if cams != 0 => bad("point_cloud takes no cameras"),
            _ => Ok(()),
        }
    }
}

/// Model inputs for one batch. Images are per camera, `[B, 3, S, S]`.
pub struct ActBatch {
    pub images: Vec<Tensor>,
    pub points: Option<Tensor>,
    /// `[B, P]`, normalized.
    pub proprio: Tensor,
    /// `[B, k, A]`, normalized; present only when training.
    pub actions: Option<Tensor>,
}

pub struct ActOutput {
    /// `[B, k, A]` in normalized action units.
    pub chunk: Tensor,
    /// Posterior mean and log-variance, `[B, L]`, when actions were given.
    pub posterior: Option<(Tensor, Tensor)>,
}

pub struct Act {
    pub config: ActConfig,
    images: Vec<ImageEncoder>,
    points: Option<PointEncoder>,
    cvae_cls: Tensor,
    cvae_proprio: Linear,
    cvae_action: Linear,
    cvae: Encoder,
    latent_head: Linear,
    latent_in: Linear,
    proprio_in: Linear,
    extra_pos: Tensor,
    memory: Encoder,
    queries: Tensor,
    decoder: Decoder,
    action_head: Linear,
}

impl Act {
    pub fn new(config: ActConfig, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let images = (0..config.cameras.len())
            .map(|i| {
                ImageEncoder::new(
                    config.image_size,
                    config.resnet_width,
                    d,
                    config.coord_channels,
                    vb.pp(format!("camera{i}")),
                )
            })
            .collect::<Result<_>>()?;
        let points = match config.space {
            ObservationSpace::PointCloud => {
                Some(PointEncoder::new(&config.point_hidden, d, vb.pp("points"))?)
            }
            _ => None,
        };
        let embed = Init::Randn {
            mean: 0.0,
            stdev: 1.0,
        };
        let (h, f) = (config.heads, config.ff_dim);
        Ok(Self {
            images,
            points,
            cvae_cls: vb.get_with_hints((1, d), "cvae_cls", embed)?,
            cvae_proprio: linear(config.proprio_dim, d, vb.pp("cvae_proprio"))?,
            cvae_action: linear(config.action_dim, d, vb.pp("cvae_action"))?,
            cvae: Encoder::new(config.cvae_layers, d, h, f, vb.pp("cvae"))?,
            latent_head: linear(d, 2 * config.latent_dim, vb.pp("latent_head"))?,
            latent_in: linear(config.latent_dim, d, vb.pp("latent_in"))?,
            proprio_in: linear(config.proprio_dim, d, vb.pp("proprio_in"))?,
            extra_pos: vb.get_with_hints((2, d), "extra_pos", embed)?,
            memory: Encoder::new(config.encoder_layers, d, h, f, vb.pp("memory"))?,
            queries: vb.get_with_hints((config.chunk, d), "queries", embed)?,
            decoder: Decoder::new(config.decoder_layers, d, h, f, vb.pp("decoder"))?,
            action_head: linear(d, config.action_dim, vb.pp("action_head"))?,
            config,
        })
    }

    /// Posterior over the style latent from proprio and the true chunk.
    pub fn encode_style(&self, proprio: &Tensor, actions: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, k, _) = actions.dims3()?;
        if k != self.config.chunk {
            return Err(Error::shape(format!(
                "chunk of {k} actions, model expects {}",
                self.config.chunk
            )));
        }
        let d = self.config.d_model;
        let cls = self.cvae_cls.unsqueeze(0)?.broadcast_as((b, 1, d))?;
        let q = self.cvae_proprio.forward(proprio)?.unsqueeze(1)?;
        let a = self.cvae_action.forward(actions)?;
        let tokens = Tensor::cat(&[&cls, &q, &a], 1)?;
        let pos = sinusoidal_1d(k + 2, d, tokens.dtype(), tokens.device())?;
        let out = self
            .cvae
            .forward(&tokens, &pos)?
            .narrow(1, 0, 1)?
            .squeeze(1)?;
        let stats = self.latent_head.forward(&out)?;
        let l = self.config.latent_dim;
        Ok((stats.narrow(1, 0, l)?, stats.narrow(1, l, l)?))
    }

    /// Runs the model. With actions, the latent is sampled from the
    /// posterior using `noise` (`[B, L]`); without, it is the zero vector.
    pub fn forward(&self, batch: &ActBatch, noise: Option<&Tensor>) -> Result<ActOutput> {
        let proprio = &batch.proprio;
        let (b, p) = proprio.dims2()?;
        if p != self.config.proprio_dim {
            return Err(Error::shape(format!(
                "proprio width {p}, model expects {}",
                self.config.proprio_dim
            )));
        }
        let l = self.config.latent_dim;
        let (z, posterior) = match &batch.actions {
            Some(actions) => {
                let (mu, logvar) = self.encode_style(proprio, actions)?;
                let z = match noise {
                    Some(eps) => (&mu + (&logvar * 0.5)?.exp()?.mul(eps)?)?,
                    None => mu.clone(),
                };
                (z, Some((mu, logvar)))
            }
            None => (
                Tensor::zeros((b, l), proprio.dtype(), proprio.device())?,
                None,
            ),
        };

        let mut tokens = vec![
            self.latent_in.forward(&z)?.unsqueeze(1)?,
            self.proprio_in.forward(proprio)?.unsqueeze(1)?,
        ];
        let mut pos = vec![self.extra_pos.clone()];
        if batch.images.len() != self.images.len() {
            return Err(Error::shape(format!(
                "{} image streams, model expects {}",
                batch.images.len(),
                self.images.len()
            )));
        }
        for (enc, img) in self.images.iter().zip(&batch.images) {
            let emb = enc.forward(img)?;
            tokens.push(emb.tokens);
            pos.push(emb.pos);
        }
        if let Some(enc) = &self.points {
            let pts = batch
                .points
                .as_ref()
                .ok_or_else(|| Error::shape("point-cloud model given no points"))?;
            let emb = enc.tokens(pts)?;
            tokens.push(emb.tokens);
            pos.push(emb.pos);
        }
        let tokens = Tensor::cat(&tokens, 1)?;
        let pos = Tensor::cat(&pos, 0)?;
        let memory = self.memory.forward(&tokens, &pos)?;

        let d = self.config.d_model;
        let queries = Tensor::zeros((b, self.config.chunk, d), memory.dtype(), memory.device())?;
        let h = self
            .decoder
            .forward(&queries, &self.queries, &memory, &pos)?;
        let chunk = self.action_head.forward(&h)?;
        Ok(ActOutput { chunk, posterior })
    }
}

/// `½ Σ (μ² + σ² − 1 − log σ²)` over the latent, averaged over the batch.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    let per = ((mu.sqr()? + logvar.exp()?)? - 1.0)?.sub(logvar)?;
    Ok((per.sum(D::Minus1)? * 0.5)?.mean_all()?)
}

pub struct ActLosses {
    pub total: Tensor,
    pub reconstruction: Tensor,
    pub kl: Tensor,
}

pub fn act_loss(
    pred: &Tensor,
    truth: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    beta: f64,
) -> Result<ActLosses> {
    if pred.dims() != truth.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    let reconstruction = (pred - truth)?.abs()?.mean_all()?;
    let kl = kl_divergence(mu, logvar)?;
    let total = (&reconstruction + (&kl * beta)?)?;
    Ok(ActLosses {
        total,
        reconstruction,
        kl,
    })
}

/// Normalized weights `exp(−m·age)` for a buffer of prediction ages.
pub fn aggregation_weights(ages: &[usize], m: f64) -> Vec<f64> {
    let raw: Vec<f64> = ages.iter().map(|&a| (-m * a as f64).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Weighted average of `(age, prediction)` pairs.
pub fn aggregate(predictions: &[(usize, &[f64])], m: f64) -> Vec<f64> {
    let Some((_, first)) = predictions.first() else {
        return Vec::new();
    };
    let ages: Vec<usize> = predictions.iter().map(|(a, _)| *a).collect();
    let weights = aggregation_weights(&ages, m);
    let mut out = vec![0.0; first.len()];
    for ((_, p), w) in predictions.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += w * v;
        }
    }
    out
}

/// Buffer of chunks predicted at past steps.
#[derive(Clone, Debug)]
pub struct TemporalAggregator {
    decay: f64,
    chunks: VecDeque<(usize, Vec<Vec<f64>>)>,
}

impl TemporalAggregator {
    pub fn new(decay: f64) -> Self {
        Self {
            decay,
            chunks: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.chunks.clear();
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Record the chunk predicted at step `t`; row `i` is the action for
    /// step `t + i`.
    pub fn push(&mut self, t: usize, chunk: Vec<Vec<f64>>) {
        self.chunks.push_back((t, chunk));
    }

    /// Executed action for step `t`. Chunks that no longer reach `t` are
    /// dropped.
    pub fn action(&mut self, t: usize) -> Option<Vec<f64>> {
        self.chunks
            .retain(|(start, c)| *start <= t && t < start + c.len());
        let preds: Vec<(usize, &[f64])> = self
            .chunks
            .iter()
            .map(|(start, c)| (t - start, c[t - start].as_slice()))
            .collect();
        if preds.is_empty() {
            None
        } else {
            Some(aggregate(&preds, self.decay))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_builder;
    use candle_core::{DType, Device};
    use candle_nn::VarMap;

    #[test]
    fn buffer_of_one_returns_chunk_head() {
        let mut agg = TemporalAggregator::new(0.01);
        agg.push(0, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(agg.action(0).unwrap(), vec![1.0, 2.0]);
        agg.push(1, vec![vec![5.0, 6.0], vec![7.0, 8.0]]);
        let a = agg.action(1).unwrap();
        let w = aggregation_weights(&[1, 0], 0.01);
        assert!((a[0] - (w[0] * 3.0 + w[1] * 5.0)).abs() < 1e-12);
        assert_eq!(agg.len(), 2);
        agg.action(2);
        assert_eq!(agg.len(), 1);
    }

    #[test]
    fn act_shapes_for_single_camera() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let mut cfg = ActConfig::new(
            ObservationSpace::SingleCamera,
            vec!["endoscope".into()],
            7,
            8,
        );
        cfg.chunk = 4;
        let act = Act::new(cfg, seeded_builder(&map, 0, DType::F32, &dev)).unwrap();
        let batch = ActBatch {
            images: vec![Tensor::zeros((2, 3, 128, 128), DType::F32, &dev).unwrap()],
            points: None,
            proprio: Tensor::zeros((2, 8), DType::F32, &dev).unwrap(),
            actions: Some(Tensor::zeros((2, 4, 7), DType::F32, &dev).unwrap()),
        };
        let out = act.forward(&batch, None).unwrap();
        assert_eq!(out.chunk.dims(), &[2, 4, 7]);
        let (mu, logvar) = out.posterior.unwrap();
        assert_eq!(mu.dims(), &[2, 32]);
        assert_eq!(logvar.dims(), &[2, 32]);
    }

    #[test]
    fn config_rejects_camera_mismatch() {
        let cfg = ActConfig::new(ObservationSpace::MultiCamera, vec!["a".into()], 7, 8);
        assert!(cfg.validate().is_err());
        let cfg = ActConfig::new(ObservationSpace::PointCloud, vec![], 7, 8);
        assert!(cfg.validate().is_ok());
    }
}
