//! Evaluation protocols for trained policies and the reports they produce.

pub mod error;
pub mod plot;
pub mod protocols;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
pub use protocols::{
    eval_seeds, run_instance_generalization, run_sample_efficiency, run_success_eval,
    run_viewpoint_robustness, Curve, CurvePoint, EvalResult, EvalSetup, InstanceRow, InstanceTable,
    Trainer, TrialFailure, ViewMode,
};
pub use report::{emit_report, model_label, Report};
pub use trainer::{ModelKind, ModelSpec, SpecTrainer};
