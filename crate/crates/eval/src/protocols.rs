//! The evaluation protocols: plain success rate, sample efficiency, needle
//! instance generalization and viewpoint robustness.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use surgbench_core::camera::{perturb_camera, swap_view, CameraRig, PerturbBounds, Perturbation};
use surgbench_core::dataset::{subsample, DemonstrationSet};
use surgbench_core::needle::NeedleSpec;
use surgbench_core::perception::PerceptionConfig;
use surgbench_core::{rollout, ObservationSpace, Policy, RolloutConfig, TaskName, TaskSpec};

use crate::error::{Error, Result};
use crate::report::model_label;

pub const TABLE1_TRIALS: usize = 50;
pub const CURVE_TRIALS: usize = 20;
pub const INSTANCE_TRIALS: usize = 50;
pub const VIEWPOINT_TRIALS: usize = 20;
pub const DEFAULT_INCREMENTS: [usize; 5] = [10, 20, 30, 40, 50];
pub const NEEDLES: [&str; 5] = ["N1", "N2", "N3", "N4", "N5"];

/// Mixed into trial seeds so viewpoint draws are independent of scene resets.
const VIEW_STREAM: u64 = 0x7669_6577_7365_6564;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: TaskName,
    pub model: String,
    pub space: Option<ObservationSpace>,
    /// `table1`, `sample-eff`, `instance-gen` or `viewpoint`.
    pub protocol: String,
    /// Protocol-specific setting: demo count, needle variant or view mode.
    pub condition: String,
    pub n_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub seeds: Vec<u64>,
    /// Trials whose rollout raised an error; each also counts as a failure.
    pub errors: Vec<TrialFailure>,
    /// Camera offsets applied per trial seed (viewpoint `view1` only).
    pub perturbations: Vec<(u64, Perturbation)>,
    pub wall_seconds: f64,
}

/// Equality over outcomes; wall time is ignored.
impl PartialEq for EvalResult {
    fn eq(&self, o: &Self) -> bool {
        self.task == o.task
            && self.model == o.model
            && self.space == o.space
            && self.protocol == o.protocol
            && self.condition == o.condition
            && self.n_trials == o.n_trials
            && self.successes == o.successes
            && self.success_rate == o.success_rate
            && self.seeds == o.seeds
            && self.errors == o.errors
            && self.perturbations == o.perturbations
    }
}

/// Rendering setup shared by every trial, plus the seeds the policy was
/// trained on, which evaluation refuses to reuse.
#[derive(Clone, Debug, Default)]
pub struct EvalSetup {
    pub rig: Option<CameraRig>,
    pub perception: PerceptionConfig,
    pub training_seeds: BTreeSet<u64>,
}

impl EvalSetup {
    pub fn new(rig: Option<CameraRig>) -> Self {
        Self {
            rig,
            ..Default::default()
        }
    }

    pub fn with_training_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.training_seeds.extend(seeds);
        self
    }

    fn rollout_config(&self, rig: Option<CameraRig>) -> RolloutConfig {
        RolloutConfig {
            rig,
            perception: self.perception.clone(),
            stop_on_success: true,
        }
    }
}

/// `n` consecutive seeds from `seed0`, none of them used for training.
pub fn eval_seeds(seed0: u64, n: usize, training: &BTreeSet<u64>) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::protocol("at least one trial is required"));
    }
    let last = seed0
        .checked_add(n as u64 - 1)
        .ok_or_else(|| Error::protocol("trial seeds overflow u64"))?;
    if let Some(s) = training.range(seed0..=last).next() {
        return Err(Error::protocol(format!(
            "evaluation seed {s} was used to collect training data"
        )));
    }
    Ok((seed0..=last).collect())
}

fn check_rig(policy: &dyn Policy, rig: Option<&CameraRig>) -> Result<()> {
    match (policy.observation_space(), rig) {
        (None, _) => Ok(()),
        (Some(space), None) => Err(Error::protocol(format!(
            "policy {} observes {space} but no camera rig was given",
            policy.name()
        ))),
        (Some(ObservationSpace::MultiCamera), Some(r)) if r.wrist.is_empty() => {
            Err(Error::protocol(format!(
                "policy {} needs wrist cameras the rig does not have",
                policy.name()
            )))
        }
        _ => Ok(()),
    }
}

struct Labels<'a> {
    protocol: &'a str,
    condition: String,
}

/// Roll out every seed in order. `rig_for` supplies each trial's rig and an
/// optional perturbation record.
fn run_trials(
    policy: &mut dyn Policy,
    spec: &TaskSpec,
    seeds: Vec<u64>,
    setup: &EvalSetup,
    labels: Labels<'_>,
    mut rig_for: impl FnMut(u64) -> Result<(Option<CameraRig>, Option<Perturbation>)>,
) -> Result<EvalResult> {
    let start = Instant::now();
    let mut successes = 0;
    let mut errors = Vec::new();
    let mut perturbations = Vec::new();
    for &seed in &seeds {
        let (rig, perturbation) = rig_for(seed)?;
        check_rig(policy, rig.as_ref())?;
        if let Some(p) = perturbation {
            perturbations.push((seed, p));
        }
        match rollout(policy, spec, seed, &setup.rollout_config(rig)) {
            Ok(r) => successes += usize::from(r.success),
            Err(e) => {
                eprintln!(
                    "warning: {} trial with seed {seed} failed: {e}",
                    policy.name()
                );
                errors.push(TrialFailure {
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let n = seeds.len();
    Ok(EvalResult {
        task: spec.name,
        model: model_label(&policy.name()),
        space: policy.observation_space(),
        protocol: labels.protocol.into(),
        condition: labels.condition,
        n_trials: n,
        successes,
        success_rate: successes as f64 / n as f64,
        seeds,
        errors,
        perturbations,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Success rate over `n_trials` rollouts from seeds `seed0..seed0 + n_trials`.
pub fn run_success_eval(
    policy: &mut dyn Policy,
    spec: &TaskSpec,
    n_trials: usize,
    seed0: u64,
    setup: &EvalSetup,
) -> Result<EvalResult> {
    let seeds = eval_seeds(seed0, n_trials, &setup.training_seeds)?;
    check_rig(policy, setup.rig.as_ref())?;
    let labels = Labels {
        protocol: "table1",
        condition: "train".into(),
    };
    run_trials(policy, spec, seeds, setup, labels, |_| {
        Ok((setup.rig.clone(), None))
    })
}

/// Something that turns a demonstration set into a policy.
pub trait Trainer {
    /// Model name as it appears in reports.
    fn label(&self) -> String;

    fn train(&mut self, set: &DemonstrationSet) -> Result<Box<dyn Policy>>;
}

#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub n_demos: usize,
    pub demo_seeds: Vec<u64>,
    /// Absent when training diverged.
    pub result: Option<EvalResult>,
    pub diverged: Option<String>,
}

impl CurvePoint {
    /// A diverged point scores zero.
    pub fn success_rate(&self) -> f64 {
        self.result.as_ref().map_or(0.0, |r| r.success_rate)
    }
}

#[derive(Clone, Debug)]
pub struct Curve {
    pub task: TaskName,
    pub model: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Every point's demos contain the previous point's demos.
    pub fn is_nested(&self) -> bool {
        self.points.windows(2).all(|w| {
            let big: BTreeSet<_> = w[1].demo_seeds.iter().collect();
            w[0].demo_seeds.iter().all(|s| big.contains(s))
        })
    }
}

/// Train on nested subsets of `set` and evaluate each. Subsets are prefixes of
/// one permutation drawn from `subsample_seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_sample_efficiency(
    trainer: &mut dyn Trainer,
    set: &DemonstrationSet,
    spec: &TaskSpec,
    increments: &[usize],
    trials: usize,
    seed0: u64,
    subsample_seed: u64,
    setup: &EvalSetup,
) -> Result<Curve> {
    if increments.is_empty() || increments.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::protocol(
            "increments must be non-empty and strictly increasing",
        ));
    }
    if set.manifest.task != spec.name {
        return Err(Error::protocol(format!(
            "dataset holds {} demos, evaluation task is {}",
            set.manifest.task, spec.name
        )));
    }
    let setup = setup.clone().with_training_seeds(set.seeds());
    let seeds = eval_seeds(seed0, trials, &setup.training_seeds)?;
    let mut points: Vec<CurvePoint> = Vec::new();
    for &n in increments {
        let subset = subsample(set, n, subsample_seed)?;
        let demo_seeds = subset.seeds();
        if let Some(prev) = points.last() {
            let have: BTreeSet<_> = demo_seeds.iter().collect();
            if !prev.demo_seeds.iter().all(|s| have.contains(s)) {
                return Err(Error::protocol(format!(
                    "the {n}-demo subset does not contain the {}-demo subset",
                    prev.n_demos
                )));
            }
        }
        let point = match trainer.train(&subset) {
            Ok(mut policy) => {
                let labels = Labels {
                    protocol: "sample-eff",
                    condition: n.to_string(),
                };
                let result =
                    run_trials(policy.as_mut(), spec, seeds.clone(), &setup, labels, |_| {
                        Ok((setup.rig.clone(), None))
                    })?;
                CurvePoint {
                    n_demos: n,
                    demo_seeds,
                    result: Some(result),
                    diverged: None,
                }
            }
            Err(Error::Policy(e @ surgbench_policies::Error::TrainingFault { .. })) => {
                eprintln!("warning: training on {n} demos diverged: {e}");
                CurvePoint {
                    n_demos: n,
                    demo_seeds,
                    result: None,
                    diverged: Some(e.to_string()),
                }
            }
            Err(e) => return Err(e),
        };
        points.push(point);
    }
    Ok(Curve {
        task: spec.name,
        model: trainer.label(),
        points,
    })
}

#[derive(Clone, Debug)]
pub struct InstanceRow {
    pub needle: String,
    /// The variant the policy was trained on.
    pub train: bool,
    pub result: EvalResult,
}

#[derive(Clone, Debug)]
pub struct InstanceTable {
    pub task: TaskName,
    pub model: String,
    pub rows: Vec<InstanceRow>,
    /// Mean success over the rows that are not the training needle.
    pub average: Option<f64>,
}

/// Evaluate a policy trained on `spec.needle` against each listed variant.
/// Only the needle geometry changes between rows.
pub fn run_instance_generalization(
    policy: &mut dyn Policy,
    spec: &TaskSpec,
    needles: &[&str],
    trials: usize,
    seed0: u64,
    setup: &EvalSetup,
) -> Result<InstanceTable> {
    if !spec.name.uses_needle() {
        return Err(Error::protocol(format!("{} has no needle", spec.name)));
    }
    for n in needles {
        NeedleSpec::variant(n)?;
    }
    let seeds = eval_seeds(seed0, trials, &setup.training_seeds)?;
    check_rig(policy, setup.rig.as_ref())?;
    let mut rows = Vec::new();
    for &needle in needles {
        let variant = spec.with_needle(needle)?;
        let labels = Labels {
            protocol: "instance-gen",
            condition: needle.into(),
        };
        let result = run_trials(policy, &variant, seeds.clone(), setup, labels, |_| {
            Ok((setup.rig.clone(), None))
        })?;
        rows.push(InstanceRow {
            needle: needle.into(),
            train: needle == spec.needle,
            result,
        });
    }
    let held_out: Vec<f64> = rows
        .iter()
        .filter(|r| !r.train)
        .map(|r| r.result.success_rate)
        .collect();
    let average =
        (!held_out.is_empty()).then(|| held_out.iter().sum::<f64>() / held_out.len() as f64);
    Ok(InstanceTable {
        task: spec.name,
        model: model_label(&policy.name()),
        rows,
        average,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    /// The rig the policy was trained with.
    Train,
    /// Primary camera shifted and tilted per trial.
    View1,
    /// Primary and alternate static views exchanged.
    View2,
}

impl ViewMode {
    pub const ALL: [ViewMode; 3] = [ViewMode::Train, ViewMode::View1, ViewMode::View2];

    pub fn as_str(&self) -> &'static str {
        match self {
            ViewMode::Train => "train",
            ViewMode::View1 => "view1",
            ViewMode::View2 => "view2",
        }
    }
}

impl fmt::Display for ViewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::protocol(format!("unknown view mode `{s}`")))
    }
}

pub fn run_viewpoint_robustness(
    policy: &mut dyn Policy,
    spec: &TaskSpec,
    mode: ViewMode,
    trials: usize,
    seed0: u64,
    bounds: &PerturbBounds,
    setup: &EvalSetup,
) -> Result<EvalResult> {
    let rig = setup
        .rig
        .clone()
        .ok_or_else(|| Error::protocol("viewpoint evaluation needs a camera rig"))?;
    let seeds = eval_seeds(seed0, trials, &setup.training_seeds)?;
    let labels = Labels {
        protocol: "viewpoint",
        condition: mode.as_str().into(),
    };
    match mode {
        ViewMode::Train => run_trials(policy, spec, seeds, setup, labels, |_| {
            Ok((Some(rig.clone()), None))
        }),
        ViewMode::View1 => run_trials(policy, spec, seeds, setup, labels, |seed| {
            let (primary, p) = perturb_camera(&rig.primary, seed ^ VIEW_STREAM, bounds);
            if !p.within(bounds) {
                return Err(Error::protocol(format!(
                    "perturbation for seed {seed} exceeds its bounds"
                )));
            }
            let shifted = CameraRig {
                primary,
                ..rig.clone()
            };
            Ok((Some(shifted), Some(p)))
        }),
        ViewMode::View2 => {
            let swapped = swap_view(&rig)?;
            run_trials(policy, spec, seeds, setup, labels, |_| {
                Ok((Some(swapped.clone()), None))
            })
        }
    }
}
