//! Deterministic desk-scale surgical manipulation benchmark: simulator,
//! renderer, perception, demonstration datasets and scripted experts.

pub mod camera;
pub mod dataset;
pub mod error;
pub mod expert;
pub mod geometry;
pub mod layout;
pub mod needle;
pub mod perception;
pub mod policy;
pub mod rawarray;
pub mod render;
pub mod sim;
pub mod success;
pub mod task;

pub use camera::{default_rig, perturb_camera, swap_view, CameraModel, CameraRig};
pub use error::{Error, Result};
pub use geometry::Pose;
pub use layout::ObjectId;
pub use needle::{generate_needle, NeedleGeometry, NeedleSpec};
pub use perception::{build_observation, Observation, ObservationSpace, PointCloud};
pub use policy::{rollout, Policy, PolicyInput, RolloutConfig, RolloutResult};
pub use render::{render, FrameSet};
pub use sim::{get_proprio, reset_task, Action, ArmAction, ArmState, JawCommand, SceneState};
pub use success::check_success;
pub use task::{TaskConfig, TaskName, TaskSpec};
