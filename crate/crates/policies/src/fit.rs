//! Training entry points for each model family.

use candle_core::Device;
use candle_nn::VarMap;

use crate::act::{act_loss, Act, ActConfig};
use crate::agent::{ActPolicy, Dp3Policy, TrainedPolicy};
use crate::batch::{act_batch, chunk_tensor, history_tensors, DTYPE};
use crate::checkpoint::{CheckpointMeta, ModelConfig, CHECKPOINT_VERSION};
use crate::data::{Frame, TrainingData};
use crate::diffusion::gaussian;
use crate::dp3::{Dp3, Dp3Config};
use crate::error::{Error, Result};
use crate::init::seeded_builder;
use crate::train::{train_loop, StepLoss, TrainConfig, TrainReport};

/// Default ACT configuration for the data's modality and widths.
pub fn act_config_for(data: &TrainingData) -> ActConfig {
    let mut cfg = ActConfig::new(
        data.space,
        data.cameras.clone(),
        data.action_dim,
        data.proprio_dim,
    );
    if let Some(img) = data.episodes[0].frames[0].images.first() {
        cfg.image_size = img.width as usize;
    }
    if let Some(c) = &data.episodes[0].frames[0].cloud {
        cfg.num_points = c.len() / 3;
    }
    cfg
}

pub fn dp3_config_for(data: &TrainingData) -> Result<Dp3Config> {
    let mut cfg = Dp3Config::new(data.action_dim, data.proprio_dim);
    let cloud = data.episodes[0].frames[0]
        .cloud
        .as_ref()
        .ok_or_else(|| Error::config("DP3 needs a point-cloud dataset"))?;
    cfg.num_points = cloud.len() / 3;
    Ok(cfg)
}

fn meta(data: &TrainingData, train: &TrainConfig, model: ModelConfig) -> Result<CheckpointMeta> {
    Ok(CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        task: data.task,
        normalization: data.fit_normalization()?,
        dataset_checksum: data.checksum.clone(),
        demos: data.episodes.len(),
        demo_seeds: data.seeds.clone(),
        capture: Some(data.capture.clone()),
        train: train.clone(),
        model,
    })
}

pub fn train_act(
    data: &TrainingData,
    config: ActConfig,
    train: &TrainConfig,
) -> Result<(TrainedPolicy, TrainReport)> {
    if config.space != data.space {
        return Err(Error::config(format!(
            "model space {} does not match dataset space {}",
            config.space, data.space
        )));
    }
    let dev = Device::Cpu;
    let meta = meta(data, train, ModelConfig::Act(config.clone()))?;
    let vars = VarMap::new();
    let model = Act::new(
        config.clone(),
        seeded_builder(&vars, train.seed, DTYPE, &dev),
    )?;
    let index = data.index();
    let k = config.chunk;
    let report = train_loop(&vars, index.len(), train, |batch, rng| {
        let frames: Vec<&Frame> = batch
            .iter()
            .map(|&i| &data.episodes[index[i].0].frames[index[i].1])
            .collect();
        let chunks: Vec<Vec<&[f32]>> = batch
            .iter()
            .map(|&i| data.chunk(index[i].0, index[i].1, k))
            .collect();
        let inputs = act_batch(&config, &frames, Some(&chunks), &meta.normalization, &dev)?;
        let noise = gaussian(rng, &[batch.len(), config.latent_dim], DTYPE, &dev)?;
        let out = model.forward(&inputs, Some(&noise))?;
        let (mu, logvar) = out.posterior.expect("training batch carries actions");
        let truth = inputs
            .actions
            .as_ref()
            .expect("training batch carries actions");
        let l = act_loss(&out.chunk, truth, &mu, &logvar, config.kl_weight)?;
        Ok(StepLoss {
            terms: vec![
                ("l1".into(), l.reconstruction.to_scalar::<f32>()? as f64),
                ("kl".into(), l.kl.to_scalar::<f32>()? as f64),
            ],
            loss: l.total,
        })
    })?;
    Ok((
        TrainedPolicy::Act(ActPolicy::new(model, vars, meta)),
        report,
    ))
}

pub fn train_dp3(
    data: &TrainingData,
    config: Dp3Config,
    train: &TrainConfig,
) -> Result<(TrainedPolicy, TrainReport)> {
    let dev = Device::Cpu;
    let meta = meta(data, train, ModelConfig::Dp3(config.clone()))?;
    if meta.normalization.points.is_none() {
        return Err(Error::config("DP3 needs a point-cloud dataset"));
    }
    let vars = VarMap::new();
    let model = Dp3::new(
        config.clone(),
        seeded_builder(&vars, train.seed, DTYPE, &dev),
    )?;
    let index = data.index();
    let report = train_loop(&vars, index.len(), train, |batch, rng| {
        let hist: Vec<Vec<&Frame>> = batch
            .iter()
            .map(|&i| data.history(index[i].0, index[i].1, config.obs_history))
            .collect();
        let chunks: Vec<Vec<&[f32]>> = batch
            .iter()
            .map(|&i| data.chunk(index[i].0, index[i].1, config.horizon))
            .collect();
        let (pts, proprio) = history_tensors(&hist, &meta.normalization, &dev)?;
        let x0 = chunk_tensor(&chunks, &meta.normalization, &dev)?;
        let loss = model.loss(&pts, &proprio, &x0, rng)?;
        Ok(StepLoss {
            loss,
            terms: vec![],
        })
    })?;
    Ok((
        TrainedPolicy::Dp3(Dp3Policy::new(model, vars, meta)),
        report,
    ))
}
