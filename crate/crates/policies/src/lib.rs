//! Behavior-cloning policies for the surgbench tasks: ACT in camera and
//! point-cloud variants, and a point-cloud diffusion policy.

pub mod act;
pub mod agent;
pub mod batch;
pub mod checkpoint;
pub mod data;
pub mod diffusion;
pub mod dp3;
pub mod error;
pub mod fit;
pub mod init;
pub mod nn;
pub mod normalize;
pub mod pointnet;
pub mod resnet;
pub mod rowlinear;
pub mod toy;
pub mod train;

use candle_core::Tensor;

pub use agent::{ActPolicy, Dp3Policy, TrainedPolicy};
pub use error::{Error, Result};
pub use fit::{act_config_for, dp3_config_for, train_act, train_dp3};
pub use train::TrainConfig;

/// Tokens `[B, T, D]` with their positional table `[T, D]`.
#[derive(Clone, Debug)]
pub struct FeatureEmbedding {
    pub tokens: Tensor,
    pub pos: Tensor,
    pub pooled: Option<Tensor>,
}
