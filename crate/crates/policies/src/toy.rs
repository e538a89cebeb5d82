//! Synthetic bimodal action data for checking that the diffusion head keeps
//! both modes instead of averaging them.

use candle_core::{DType, Device, Tensor};
use candle_nn::VarMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{DiffusionHead, UnetConfig};
use crate::error::Result;
use crate::init::seeded_builder;
use crate::train::{train_loop, StepLoss, TrainConfig};

#[derive(Clone, Debug)]
pub struct BimodalConfig {
    pub horizon: usize,
    pub train: TrainConfig,
    pub samples: usize,
    /// Half-width of the window around each mode.
    pub window: f64,
}

impl Default for BimodalConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            train: TrainConfig {
                steps: 1500,
                batch_size: 64,
                lr: 1e-3,
                final_lr_fraction: 0.1,
                ..Default::default()
            },
            samples: 1000,
            window: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BimodalReport {
    /// Fraction of samples within the window of −1 and of +1.
    pub near_minus: f64,
    pub near_plus: f64,
    pub final_loss: f64,
    pub seconds: f64,
}

/// Trains on chunks that are all −1 or all +1 with equal mass and no
/// conditioning signal, then draws samples and histograms their first action.
pub fn bimodal_experiment(config: &BimodalConfig) -> Result<BimodalReport> {
    let started = std::time::Instant::now();
    let dev = Device::Cpu;
    let vars = VarMap::new();
    let unet = UnetConfig {
        down_dims: vec![32, 64],
        step_embed_dim: 32,
        ..UnetConfig::new(1, config.horizon, 1)
    };
    let head = DiffusionHead::new(
        unet,
        100,
        10,
        seeded_builder(&vars, config.train.seed, DType::F32, &dev),
    )?;
    let h = config.horizon;
    let report = train_loop(&vars, 2, &config.train, |_, rng| {
        let b = config.train.batch_size;
        let data: Vec<f32> = (0..b)
            .flat_map(|i| std::iter::repeat_n(if i % 2 == 0 { -1.0 } else { 1.0 }, h))
            .collect();
        let x0 = Tensor::from_vec(data, (b, h, 1), &dev)?;
        let cond = Tensor::zeros((b, 1), DType::F32, &dev)?;
        Ok(StepLoss {
            loss: head.loss(&x0, &cond, rng)?,
            terms: vec![],
        })
    })?;
    let cond = Tensor::zeros((config.samples, 1), DType::F32, &dev)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ 0x5eed);
    let out = head.sample(&cond, &mut rng)?;
    let first: Vec<f32> = out.narrow(1, 0, 1)?.flatten_all()?.to_vec1()?;
    let frac = |mode: f64| {
        first
            .iter()
            .filter(|v| (f64::from(**v) - mode).abs() <= config.window)
            .count() as f64
            / first.len() as f64
    };
    Ok(BimodalReport {
        near_minus: frac(-1.0),
        near_plus: frac(1.0),
        final_loss: report.tail_mean(100),
        seconds: started.elapsed().as_secs_f64(),
    })
}
