//! Demonstration sets turned into in-memory training samples.

use candle_core::{DType, Device, Tensor};
use sha2::{Digest, Sha256};
use surgbench_core::dataset::{Capture, DemonstrationSet};
use surgbench_core::perception::RgbImage;
use surgbench_core::{Observation, ObservationSpace, TaskName};

use crate::error::{Error, Result};
use crate::normalize::MinMax;
use crate::resnet::images_to_tensor;

/// What a model consumes from one observation.
#[derive(Clone, Debug)]
pub struct Frame {
    /// Images in the model's camera order.
    pub images: Vec<RgbImage>,
    /// Flattened `[N, 3]` points.
    pub cloud: Option<Vec<f32>>,
    pub proprio: Vec<f32>,
}

impl Frame {
    /// Images are matched to `cameras` by id. A configured camera that is
    /// missing takes the observation's unclaimed image instead, so a policy
    /// trained on one primary view can be run after the view is swapped.
    pub fn from_observation(
        obs: &Observation,
        space: ObservationSpace,
        cameras: &[String],
    ) -> Result<Self> {
        let mut spare = obs
            .images
            .iter()
            .filter(|(id, _)| !cameras.contains(id))
            .map(|(_, img)| img);
        let images = cameras
            .iter()
            .map(|c| {
                obs.images
                    .get(c)
                    .or_else(|| spare.next())
                    .cloned()
                    .ok_or_else(|| Error::shape(format!("observation has no image for camera {c}")))
            })
            .collect::<Result<_>>()?;
        let cloud = match space {
            ObservationSpace::PointCloud => {
                let c = obs
                    .cloud
                    .as_ref()
                    .ok_or_else(|| Error::shape("point-cloud observation without a cloud"))?;
                if c.is_empty() {
                    return Err(Error::Core(surgbench_core::Error::EmptyCloud));
                }
                Some(c.to_f32())
            }
            _ => None,
        };
        Ok(Self {
            images,
            cloud,
            proprio: obs.proprio.iter().map(|v| *v as f32).collect(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeData {
    pub frames: Vec<Frame>,
    pub actions: Vec<Vec<f32>>,
}

/// Normalization statistics fitted on the training set.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub action: MinMax,
    pub proprio: MinMax,
    /// Per-axis point statistics for point-cloud models.
    pub points: Option<MinMax>,
}

#[derive(Clone, Debug)]
pub struct TrainingData {
    pub task: TaskName,
    pub space: ObservationSpace,
    pub cameras: Vec<String>,
    pub episodes: Vec<EpisodeData>,
    pub action_dim: usize,
    pub proprio_dim: usize,
    /// Hash of the manifest entries the data came from.
    pub checksum: String,
    /// Collection seeds of the episodes, which evaluation must avoid.
    pub seeds: Vec<u64>,
    pub capture: Capture,
}

/// SHA-256 over `name:checksum` lines of the set's manifest.
pub fn dataset_checksum(set: &DemonstrationSet) -> String {
    let mut h = Sha256::new();
    for e in &set.manifest.episodes {
        h.update(format!("{}:{}\n", e.name, e.checksum).as_bytes());
    }
    hex::encode(h.finalize())
}

impl TrainingData {
    pub fn load(set: &DemonstrationSet) -> Result<Self> {
        let capture = set
            .manifest
            .capture
            .as_ref()
            .ok_or_else(|| Error::config("dataset was collected without observations"))?;
        let space = capture.space;
        let mut cameras: Option<Vec<String>> = None;
        let mut episodes = Vec::with_capacity(set.len());
        for i in 0..set.len() {
            let ep = set.load(i)?;
            let actions = ep.action_rows()?;
            let mut frames = Vec::with_capacity(ep.steps());
            for t in 0..ep.steps() {
                let obs = ep.observation(t)?;
                let cams = cameras.get_or_insert_with(|| obs.images.keys().cloned().collect());
                frames.push(Frame::from_observation(&obs, space, cams)?);
            }
            if !frames.is_empty() {
                episodes.push(EpisodeData { frames, actions });
            }
        }
        let first = episodes
            .first()
            .ok_or_else(|| Error::config("dataset holds no steps"))?;
        Ok(Self {
            task: set.manifest.task,
            space,
            cameras: cameras.unwrap_or_default(),
            action_dim: first.actions[0].len(),
            proprio_dim: first.frames[0].proprio.len(),
            episodes,
            checksum: dataset_checksum(set),
            seeds: set.seeds(),
            capture: capture.clone(),
        })
    }

    /// Every `(episode, step)` pair.
    pub fn index(&self) -> Vec<(usize, usize)> {
        self.episodes
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| (0..ep.frames.len()).map(move |t| (e, t)))
            .collect()
    }

    pub fn fit_normalization(&self) -> Result<Normalization> {
        let actions: Vec<&[f32]> = self
            .episodes
            .iter()
            .flat_map(|e| e.actions.iter().map(Vec::as_slice))
            .collect();
        let proprio: Vec<&[f32]> = self
            .episodes
            .iter()
            .flat_map(|e| e.frames.iter().map(|f| f.proprio.as_slice()))
            .collect();
        let points: Vec<&[f32]> = self
            .episodes
            .iter()
            .flat_map(|e| e.frames.iter())
            .filter_map(|f| f.cloud.as_deref())
            .flat_map(|c| c.chunks_exact(3))
            .collect();
        Ok(Normalization {
            action: MinMax::fit(&actions)?,
            proprio: MinMax::fit(&proprio)?,
            points: if points.is_empty() {
                None
            } else {
                Some(MinMax::fit(&points)?)
            },
        })
    }

    /// Actions `t..t+len`, padded by repeating the final action.
    pub fn chunk(&self, episode: usize, t: usize, len: usize) -> Vec<&[f32]> {
        let acts = &self.episodes[episode].actions;
        (t..t + len)
            .map(|i| acts[i.min(acts.len() - 1)].as_slice())
            .collect()
    }

    /// Observations `t-h+1..=t`, clamped at the episode start.
    pub fn history(&self, episode: usize, t: usize, h: usize) -> Vec<&Frame> {
        let frames = &self.episodes[episode].frames;
        (0..h)
            .map(|k| &frames[(t + k + 1).saturating_sub(h)])
            .collect()
    }
}

/// `[B, ...]` tensor from equal-length rows.
pub fn rows_to_tensor(rows: &[Vec<f32>], dtype: DType, dev: &Device) -> Result<Tensor> {
    let width = rows.first().map_or(0, Vec::len);
    let data: Vec<f32> = rows.iter().flatten().copied().collect();
    Ok(Tensor::from_vec(data, (rows.len(), width), dev)?.to_dtype(dtype)?)
}

/// Per-camera image batches for a list of frames.
pub fn image_batches(
    frames: &[&Frame],
    size: usize,
    dtype: DType,
    dev: &Device,
) -> Result<Vec<Tensor>> {
    let cams = frames.first().map_or(0, |f| f.images.len());
    (0..cams)
        .map(|c| {
            let imgs: Vec<&RgbImage> = frames.iter().map(|f| &f.images[c]).collect();
            images_to_tensor(&imgs, size, dtype, dev)
        })
        .collect()
}

/// `[B, N, 3]` normalized points for a list of frames.
pub fn point_batch(frames: &[&Frame], norm: &MinMax, dtype: DType, dev: &Device) -> Result<Tensor> {
    let mut n = None;
    let mut data = Vec::new();
    for f in frames {
        let c = f
            .cloud
            .as_ref()
            .ok_or_else(|| Error::shape("frame has no point cloud"))?;
        let len = c.len() / 3;
        if len == 0 {
            return Err(Error::Core(surgbench_core::Error::EmptyCloud));
        }
        if *n.get_or_insert(len) != len {
            return Err(Error::shape("clouds in a batch differ in size"));
        }
        for p in c.chunks_exact(3) {
            data.extend(norm.normalize(p));
        }
    }
    Ok(Tensor::from_vec(data, (frames.len(), n.unwrap_or(0), 3), dev)?.to_dtype(dtype)?)
}
