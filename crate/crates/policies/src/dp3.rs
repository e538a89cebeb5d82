//! Point-cloud diffusion policy: pooled point features and proprio over a
//! short observation history condition a sample-predicting U-Net.

use candle_core::Tensor;
use candle_nn::VarBuilder;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionHead, UnetConfig};
use crate::error::{Error, Result};
use crate::pointnet::PointEncoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dp3Config {
    pub action_dim: usize,
    pub proprio_dim: usize,
    /// Predicted chunk length H.
    pub horizon: usize,
    /// Actions executed before re-planning.
    pub exec_horizon: usize,
    pub obs_history: usize,
    pub num_points: usize,
    pub point_hidden: Vec<usize>,
    pub point_dim: usize,
    pub down_dims: Vec<usize>,
    pub kernel: usize,
    pub step_embed_dim: usize,
    pub train_steps: usize,
    pub inference_steps: usize,
}

impl Dp3Config {
    pub fn new(action_dim: usize, proprio_dim: usize) -> Self {
        Self {
            action_dim,
            proprio_dim,
            horizon: 16,
            exec_horizon: 8,
            obs_history: 2,
            num_points: 512,
            point_hidden: vec![64, 128, 256],
            point_dim: 64,
            down_dims: vec![64, 128, 256],
            kernel: 5,
            step_embed_dim: 64,
            train_steps: 100,
            inference_steps: 10,
        }
    }

    pub fn cond_dim(&self) -> usize {
        self.obs_history * (self.point_dim + self.proprio_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exec_horizon == 0 || self.exec_horizon > self.horizon {
            return Err(Error::config(format!(
                "execution horizon {} not in 1..={}",
                self.exec_horizon, self.horizon
            )));
        }
        if self.obs_history == 0 {
            return Err(Error::config("observation history must be at least 1"));
        }
        Ok(())
    }
}

pub struct Dp3 {
    pub config: Dp3Config,
    encoder: PointEncoder,
    pub head: DiffusionHead,
}

impl Dp3 {
    pub fn new(config: Dp3Config, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        let encoder = PointEncoder::new(&config.point_hidden, config.point_dim, vb.pp("points"))?;
        let unet = UnetConfig {
            down_dims: config.down_dims.clone(),
            kernel: config.kernel,
            step_embed_dim: config.step_embed_dim,
            ..UnetConfig::new(config.action_dim, config.horizon, config.cond_dim())
        };
        let head = DiffusionHead::new(
            unet,
            config.train_steps,
            config.inference_steps,
            vb.pp("unet"),
        )?;
        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    /// `points` is `[B, h, N, 3]` and `proprio` `[B, h, P]`; returns the
    /// `[B, h·(D + P)]` conditioning vector.
    pub fn conditioning(&self, points: &Tensor, proprio: &Tensor) -> Result<Tensor> {
        let (b, h, n, c) = points.dims4()?;
        if h != self.config.obs_history {
            return Err(Error::shape(format!(
                "history of {h} frames, model expects {}",
                self.config.obs_history
            )));
        }
        let feats = self.encoder.pooled(&points.reshape((b * h, n, c))?)?;
        let feats = feats.reshape((b, h, self.config.point_dim))?;
        let cond = Tensor::cat(&[&feats, proprio], 2)?;
        Ok(cond.reshape((b, self.config.cond_dim()))?)
    }

    pub fn loss(
        &self,
        points: &Tensor,
        proprio: &Tensor,
        actions: &Tensor,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let cond = self.conditioning(points, proprio)?;
        self.head.loss(actions, &cond, rng)
    }

    /// `[B, H, A]` normalized action chunks.
    pub fn sample(&self, points: &Tensor, proprio: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
        let cond = self.conditioning(points, proprio)?;
        self.head.sample(&cond, rng)
    }
}
