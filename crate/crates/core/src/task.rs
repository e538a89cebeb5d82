//! Task definitions: identity, randomization ranges, success thresholds and
//! the simulator constants they run under.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::needle::NeedleSpec;

const DEFAULTS_TOML: &str = include_str!("../configs/defaults.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    TissueRetraction,
    NeedleLift,
    NeedleHandover,
    SuturePad,
    BlockTransfer,
}

impl TaskName {
    pub const ALL: [TaskName; 5] = [
        TaskName::TissueRetraction,
        TaskName::NeedleLift,
        TaskName::NeedleHandover,
        TaskName::SuturePad,
        TaskName::BlockTransfer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::TissueRetraction => "tissue_retraction",
            TaskName::NeedleLift => "needle_lift",
            TaskName::NeedleHandover => "needle_handover",
            TaskName::SuturePad => "suture_pad",
            TaskName::BlockTransfer => "block_transfer",
        }
    }

    pub fn uses_needle(&self) -> bool {
        matches!(
            self,
            TaskName::NeedleLift | TaskName::NeedleHandover | TaskName::SuturePad
        )
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown task name `{s}`")))
    }
}

/// Simulator constants shared by every task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub max_step_translation: f64,
    pub max_step_rotation: f64,
    pub grasp_radius: f64,
    pub jaw_max: f64,
    pub jaw_rate: f64,
    pub jaw_close_threshold: f64,
    /// Distance a released object drops per step until it rests.
    pub fall_speed: f64,
    pub control_rate_hz: f64,
}

/// Half-widths of the uniform initial-state distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Randomization {
    pub offset_x: f64,
    pub offset_y: f64,
    /// Number of candidate start pegs (block transfer only).
    pub pegs: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessParams {
    pub lift_height: f64,
    pub grasp_region_tolerance: f64,
    pub hole_radius: f64,
    pub peg_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub num_arms: usize,
    pub horizon: u32,
    pub randomization: Randomization,
    pub success: SuccessParams,
    pub sim: SimParams,
    /// Needle variant used by the needle tasks.
    pub needle: String,
    /// Resolved needle geometry; filled from the registry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needle_spec: Option<NeedleSpec>,
    pub camera_rig: Vec<String>,
    pub primary_camera: String,
    pub alternate_camera: String,
}

impl TaskSpec {
    /// Embedded default spec for a task.
    pub fn default_for(name: TaskName) -> TaskSpec {
        TaskConfig::defaults()
            .task(name)
            .expect("embedded defaults define every task")
    }

    pub fn by_name(name: &str) -> Result<TaskSpec> {
        Ok(Self::default_for(name.parse()?))
    }

    /// Same task with another registered needle variant.
    pub fn with_needle(&self, variant: &str) -> Result<TaskSpec> {
        let spec = TaskConfig::defaults().needle(variant)?;
        let mut out = self.clone();
        out.needle = variant.to_string();
        out.needle_spec = Some(spec);
        Ok(out)
    }

    pub fn resolved_needle(&self) -> Result<NeedleSpec> {
        match &self.needle_spec {
            Some(spec) => Ok(spec.clone()),
            None => TaskConfig::defaults().needle(&self.needle),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.randomization;
        if !(r.offset_x >= 0.0 && r.offset_y >= 0.0) {
            return Err(Error::config("randomization ranges must be non-negative"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        let expected_arms = if self.name == TaskName::NeedleHandover {
            2
        } else {
            1
        };
        if self.num_arms != expected_arms {
            return Err(Error::config(format!(
                "{} requires {} arm(s), got {}",
                self.name, expected_arms, self.num_arms
            )));
        }
        if self.name == TaskName::BlockTransfer && r.pegs == 0 {
            return Err(Error::config("block_transfer needs at least one start peg"));
        }
        let s = &self.sim;
        if !(s.max_step_translation > 0.0 && s.max_step_rotation > 0.0 && s.grasp_radius > 0.0) {
            return Err(Error::config(
                "step clamps and grasp radius must be positive",
            ));
        }
        if !(s.jaw_close_threshold >= 0.0 && s.jaw_close_threshold < s.jaw_max && s.jaw_rate > 0.0)
        {
            return Err(Error::config("jaw parameters out of range"));
        }
        for cam in [&self.primary_camera, &self.alternate_camera] {
            if !self.camera_rig.contains(cam) {
                return Err(Error::config(format!("camera `{cam}` missing from rig")));
            }
        }
        if self.name.uses_needle() {
            self.resolved_needle()?.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<TaskSpec> {
        let spec: TaskSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Deserialize)]
struct RawTask {
    num_arms: usize,
    horizon: u32,
    needle: String,
    camera_rig: Vec<String>,
    primary_camera: String,
    alternate_camera: String,
    randomization: Randomization,
    success: SuccessParams,
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    sim: SimParams,
    #[serde(default)]
    tasks: BTreeMap<String, RawTask>,
    #[serde(default)]
    needles: BTreeMap<String, NeedleSpec>,
}

/// Task and needle registry parsed from a structured text config.
#[derive(Clone, Debug)]
pub struct TaskConfig {
    tasks: BTreeMap<TaskName, TaskSpec>,
    needles: BTreeMap<String, NeedleSpec>,
}

impl TaskConfig {
    pub fn defaults() -> &'static TaskConfig {
        static DEFAULTS: OnceLock<TaskConfig> = OnceLock::new();
        DEFAULTS.get_or_init(|| {
            TaskConfig::from_toml(DEFAULTS_TOML).expect("embedded defaults must parse")
        })
    }

    pub fn from_toml(text: &str) -> Result<TaskConfig> {
        let raw: RawConfig = toml::from_str(text)?;
        for (name, needle) in &raw.needles {
            needle
                .validate()
                .map_err(|e| Error::config(format!("needle {name}: {e}")))?;
        }
        let mut tasks = BTreeMap::new();
        for (key, t) in raw.tasks {
            let name: TaskName = key.parse()?;
            let needle_spec = raw.needles.get(&t.needle).cloned();
            let spec = TaskSpec {
                name,
                num_arms: t.num_arms,
                horizon: t.horizon,
                randomization: t.randomization,
                success: t.success,
                sim: raw.sim,
                needle: t.needle,
                needle_spec,
                camera_rig: t.camera_rig,
                primary_camera: t.primary_camera,
                alternate_camera: t.alternate_camera,
            };
            spec.validate()?;
            tasks.insert(name, spec);
        }
        Ok(TaskConfig {
            tasks,
            needles: raw.needles,
        })
    }

    pub fn task(&self, name: TaskName) -> Result<TaskSpec> {
        self.tasks
            .get(&name)
            .cloned()
            .ok_or_else(|| Error::config(format!("task {name} not defined in config")))
    }

    pub fn needle(&self, name: &str) -> Result<NeedleSpec> {
        self.needles
            .get(name)
            .cloned()
            .ok_or_else(|| Error::config(format!("unknown needle variant `{name}`")))
    }

    pub fn needle_names(&self) -> impl Iterator<Item = &str> {
        self.needles.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_define_all_tasks() {
        for name in TaskName::ALL {
            let spec = TaskSpec::default_for(name);
            spec.validate().unwrap();
            assert_eq!(spec.name, name);
        }
        assert_eq!(TaskSpec::default_for(TaskName::NeedleHandover).num_arms, 2);
    }

    #[test]
    fn unknown_task_is_config_error() {
        assert!(matches!(
            TaskSpec::by_name("knot_tying"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = TaskSpec::default_for(TaskName::SuturePad);
        let back = TaskSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn negative_range_and_bad_arm_count_rejected() {
        let mut spec = TaskSpec::default_for(TaskName::NeedleLift);
        spec.randomization.offset_x = -0.01;
        assert!(spec.validate().is_err());
        let mut spec = TaskSpec::default_for(TaskName::NeedleLift);
        spec.num_arms = 2;
        assert!(spec.validate().is_err());
        let mut spec = TaskSpec::default_for(TaskName::NeedleLift);
        spec.horizon = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn paper_ranges_in_defaults() {
        let lift = TaskSpec::default_for(TaskName::NeedleLift).randomization;
        assert_eq!((lift.offset_x, lift.offset_y), (0.025, 0.01));
        let hand = TaskSpec::default_for(TaskName::NeedleHandover).randomization;
        assert_eq!((hand.offset_x, hand.offset_y), (0.015, 0.02));
        let pad = TaskSpec::default_for(TaskName::SuturePad).randomization;
        assert_eq!(pad.offset_x, 0.02);
        // 4 cm span along the tissue edge.
        let tissue = TaskSpec::default_for(TaskName::TissueRetraction).randomization;
        assert_eq!(2.0 * tissue.offset_x, 0.04);
        assert_eq!(
            TaskSpec::default_for(TaskName::BlockTransfer)
                .randomization
                .pegs,
            6
        );
    }
}
