//! Trained models wrapped as closed-loop policies.

use std::collections::VecDeque;
use std::path::Path;

use candle_core::Device;
use candle_nn::VarMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surgbench_core::{Action, ObservationSpace, Policy, PolicyInput, SceneState};

use crate::act::{Act, TemporalAggregator};
use crate::batch::{act_batch, history_tensors};
use crate::checkpoint::{self, CheckpointMeta, ModelConfig};
use crate::data::Frame;
use crate::dp3::Dp3;
use crate::error::{Error, Result};

fn rows(chunk: &candle_core::Tensor, meta: &CheckpointMeta) -> Result<Vec<Vec<f64>>> {
    let chunk: Vec<Vec<f32>> = chunk.squeeze(0)?.to_vec2()?;
    Ok(chunk
        .iter()
        .map(|r| meta.normalization.action.denormalize(r))
        .collect())
}

fn observation<'a>(
    input: &'a PolicyInput<'_>,
    name: &str,
) -> Result<&'a surgbench_core::Observation> {
    input
        .observation
        .ok_or_else(|| Error::config(format!("{name} needs an observation every step")))
}

pub struct ActPolicy {
    pub model: Act,
    pub vars: VarMap,
    pub meta: CheckpointMeta,
    aggregator: TemporalAggregator,
    t: usize,
}

impl ActPolicy {
    pub fn new(model: Act, vars: VarMap, meta: CheckpointMeta) -> Self {
        Self {
            aggregator: TemporalAggregator::new(model.config.temporal_decay),
            model,
            vars,
            meta,
            t: 0,
        }
    }

    /// Denormalized chunk for one frame, with the style latent at zero.
    pub fn predict_chunk(&self, frame: &Frame) -> Result<Vec<Vec<f64>>> {
        let batch = act_batch(
            &self.model.config,
            &[frame],
            None,
            &self.meta.normalization,
            &Device::Cpu,
        )?;
        let out = self.model.forward(&batch, None)?;
        rows(&out.chunk.detach(), &self.meta)
    }

    fn step(&mut self, input: &PolicyInput<'_>) -> Result<Action> {
        let obs = observation(input, "ACT")?;
        let cfg = &self.model.config;
        let frame = Frame::from_observation(obs, cfg.space, &cfg.cameras)?;
        let chunk = self.predict_chunk(&frame)?;
        self.aggregator.push(self.t, chunk);
        let action = self
            .aggregator
            .action(self.t)
            .expect("the chunk just pushed covers the current step");
        self.t += 1;
        Ok(Action::from_slice(&action)?)
    }
}

impl Policy for ActPolicy {
    fn name(&self) -> String {
        format!("act-{}", self.model.config.space)
    }

    fn observation_space(&self) -> Option<ObservationSpace> {
        Some(self.model.config.space)
    }

    fn reset(&mut self, _state: &SceneState, _seed: u64) -> surgbench_core::Result<()> {
        self.aggregator.reset();
        self.t = 0;
        Ok(())
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> surgbench_core::Result<Action> {
        Ok(self.step(input)?)
    }
}

pub struct Dp3Policy {
    pub model: Dp3,
    pub vars: VarMap,
    pub meta: CheckpointMeta,
    history: VecDeque<Frame>,
    plan: VecDeque<Vec<f64>>,
    rng: ChaCha8Rng,
}

const SAMPLING_STREAM: u64 = 0x6470_335f_7361_6d70;

impl Dp3Policy {
    pub fn new(model: Dp3, vars: VarMap, meta: CheckpointMeta) -> Self {
        Self {
            model,
            vars,
            meta,
            history: VecDeque::new(),
            plan: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(SAMPLING_STREAM),
        }
    }

    fn step(&mut self, input: &PolicyInput<'_>) -> Result<Action> {
        let obs = observation(input, "DP3")?;
        let frame = Frame::from_observation(obs, ObservationSpace::PointCloud, &[])?;
        let h = self.model.config.obs_history;
        while self.history.len() < h - 1 {
            self.history.push_back(frame.clone());
        }
        self.history.push_back(frame);
        while self.history.len() > h {
            self.history.pop_front();
        }
        if self.plan.is_empty() {
            let hist: Vec<&Frame> = self.history.iter().collect();
            let (pts, proprio) = history_tensors(&[hist], &self.meta.normalization, &Device::Cpu)?;
            let chunk = self.model.sample(&pts, &proprio, &mut self.rng)?;
            let rows = rows(&chunk.detach(), &self.meta)?;
            self.plan
                .extend(rows.into_iter().take(self.model.config.exec_horizon));
        }
        let action = self.plan.pop_front().expect("plan refilled above");
        Ok(Action::from_slice(&action)?)
    }
}

impl Policy for Dp3Policy {
    fn name(&self) -> String {
        "dp3".into()
    }

    fn observation_space(&self) -> Option<ObservationSpace> {
        Some(ObservationSpace::PointCloud)
    }

    fn reset(&mut self, _state: &SceneState, seed: u64) -> surgbench_core::Result<()> {
        self.history.clear();
        self.plan.clear();
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ SAMPLING_STREAM);
        Ok(())
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> surgbench_core::Result<Action> {
        Ok(self.step(input)?)
    }
}

/// A trained policy of either family.
#[allow(clippy::large_enum_variant)]
pub enum TrainedPolicy {
    Act(ActPolicy),
    Dp3(Dp3Policy),
}

impl TrainedPolicy {
    pub fn meta(&self) -> &CheckpointMeta {
        match self {
            TrainedPolicy::Act(p) => &p.meta,
            TrainedPolicy::Dp3(p) => &p.meta,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let vars = match self {
            TrainedPolicy::Act(p) => &p.vars,
            TrainedPolicy::Dp3(p) => &p.vars,
        };
        checkpoint::save(dir, self.meta(), vars)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = checkpoint::read_meta(dir)?;
        Ok(match meta.model.clone() {
            ModelConfig::Act(cfg) => {
                let (model, vars) = checkpoint::load_into(dir, |vb| Act::new(cfg, vb))?;
                TrainedPolicy::Act(ActPolicy::new(model, vars, meta))
            }
            ModelConfig::Dp3(cfg) => {
                let (model, vars) = checkpoint::load_into(dir, |vb| Dp3::new(cfg, vb))?;
                TrainedPolicy::Dp3(Dp3Policy::new(model, vars, meta))
            }
        })
    }

    fn inner(&mut self) -> &mut dyn Policy {
        match self {
            TrainedPolicy::Act(p) => p,
            TrainedPolicy::Dp3(p) => p,
        }
    }
}

impl Policy for TrainedPolicy {
    fn name(&self) -> String {
        match self {
            TrainedPolicy::Act(p) => p.name(),
            TrainedPolicy::Dp3(p) => p.name(),
        }
    }

    fn observation_space(&self) -> Option<ObservationSpace> {
        match self {
            TrainedPolicy::Act(p) => p.observation_space(),
            TrainedPolicy::Dp3(p) => p.observation_space(),
        }
    }

    fn reset(&mut self, state: &SceneState, seed: u64) -> surgbench_core::Result<()> {
        self.inner().reset(state, seed)
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> surgbench_core::Result<Action> {
        self.inner().act(input)
    }
}
