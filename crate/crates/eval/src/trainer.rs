//! Training from a model description, for protocols that train their own policies.

use std::fmt;
use std::str::FromStr;

use surgbench_core::dataset::DemonstrationSet;
use surgbench_core::Policy;
use surgbench_policies::data::TrainingData;
use surgbench_policies::{
    act_config_for, dp3_config_for, train_act, train_dp3, TrainConfig, TrainedPolicy,
};

use crate::error::{Error, Result};
use crate::protocols::Trainer;
use crate::report::model_label;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// ACT over whichever modality the dataset captured.
    Act,
    Dp3,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Act => "act",
            ModelKind::Dp3 => "dp3",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "act" => Ok(ModelKind::Act),
            "dp3" => Ok(ModelKind::Dp3),
            _ => Err(Error::protocol(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn fit(&self, set: &DemonstrationSet) -> Result<TrainedPolicy> {
        let data = TrainingData::load(set)?;
        let (policy, _) = match self.kind {
            ModelKind::Act => train_act(&data, act_config_for(&data), &self.train)?,
            ModelKind::Dp3 => train_dp3(&data, dp3_config_for(&data)?, &self.train)?,
        };
        Ok(policy)
    }
}

/// A model spec bound to the modality of the data it will train on.
pub struct SpecTrainer {
    pub spec: ModelSpec,
    label: String,
}

impl SpecTrainer {
    pub fn new(spec: ModelSpec, set: &DemonstrationSet) -> Result<Self> {
        let space = set
            .manifest
            .capture
            .as_ref()
            .map(|c| c.space)
            .ok_or_else(|| Error::protocol("dataset has no captured observations to train on"))?;
        let name = match spec.kind {
            ModelKind::Act => format!("act-{space}"),
            ModelKind::Dp3 => "dp3".into(),
        };
        Ok(Self {
            spec,
            label: model_label(&name),
        })
    }
}

impl Trainer for SpecTrainer {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn train(&mut self, set: &DemonstrationSet) -> Result<Box<dyn Policy>> {
        Ok(Box::new(self.spec.fit(set)?))
    }
}
