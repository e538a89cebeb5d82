//! Checkpoints: a safetensors parameter blob next to a TOML sidecar that
//! holds the architecture, normalization statistics and data provenance.

use std::path::Path;

use candle_core::Device;
use candle_nn::VarMap;
use serde::{Deserialize, Serialize};
use surgbench_core::dataset::Capture;
use surgbench_core::TaskName;

use crate::act::ActConfig;
use crate::batch::DTYPE;
use crate::data::Normalization;
use crate::dp3::Dp3Config;
use crate::error::{Error, Result};
use crate::init::seeded_builder;
use crate::train::TrainConfig;

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const SIDECAR_FILE: &str = "checkpoint.toml";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Act(ActConfig),
    Dp3(Dp3Config),
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Act(_) => "act",
            ModelConfig::Dp3(_) => "dp3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub task: TaskName,
    pub normalization: Normalization,
    /// Hash of the manifest entries trained on.
    pub dataset_checksum: String,
    pub demos: usize,
    #[serde(default)]
    pub demo_seeds: Vec<u64>,
    /// Cameras and perception settings the training data was captured with.
    #[serde(default)]
    pub capture: Option<Capture>,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

pub fn save(dir: &Path, meta: &CheckpointMeta, vars: &VarMap) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    vars.save(dir.join(WEIGHTS_FILE))?;
    std::fs::write(dir.join(SIDECAR_FILE), toml::to_string(meta)?)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(SIDECAR_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Checkpoint {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    let meta: CheckpointMeta = toml::from_str(&text)?;
    if meta.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            path,
            msg: format!("unsupported version {}", meta.format_version),
        });
    }
    Ok(meta)
}

/// Builds the model described by `meta` with `build`, then overwrites its
/// parameters from the blob.
pub fn load_into<M>(
    dir: &Path,
    build: impl FnOnce(candle_nn::VarBuilder<'static>) -> Result<M>,
) -> Result<(M, VarMap)> {
    let mut vars = VarMap::new();
    let model = build(seeded_builder(&vars, 0, DTYPE, &Device::Cpu))?;
    let path = dir.join(WEIGHTS_FILE);
    vars.load(&path).map_err(|e| Error::Checkpoint {
        path,
        msg: e.to_string(),
    })?;
    Ok((model, vars))
}
