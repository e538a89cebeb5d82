//! Policy interface and closed-loop rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraRig;
use crate::error::Result;
use crate::expert::ScriptedExpert;
use crate::perception::{build_observation, Observation, ObservationSpace, PerceptionConfig};
use crate::sim::{reset_task, Action, ArmAction, JawCommand, SceneState};
use crate::success::check_success;
use crate::task::TaskSpec;

/// What a policy sees at one step. Learned policies read only `observation`;
/// `state` is there for privileged baselines such as the scripted expert.
pub struct PolicyInput<'a> {
    pub state: &'a SceneState,
    pub observation: Option<&'a Observation>,
}

pub trait Policy {
    fn name(&self) -> String;

    /// Sensor modality the policy consumes; `None` means no rendering is needed.
    fn observation_space(&self) -> Option<ObservationSpace>;

    /// Called with the initial scene of every episode.
    fn reset(&mut self, state: &SceneState, seed: u64) -> Result<()>;

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action>;
}

/// Scripted expert wrapped as a policy.
#[derive(Default)]
pub struct ExpertPolicy {
    expert: Option<ScriptedExpert>,
}

impl Policy for ExpertPolicy {
    fn name(&self) -> String {
        "expert".into()
    }

    fn observation_space(&self) -> Option<ObservationSpace> {
        None
    }

    fn reset(&mut self, state: &SceneState, _seed: u64) -> Result<()> {
        self.expert = Some(ScriptedExpert::new(state)?);
        Ok(())
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action> {
        if self.expert.is_none() {
            self.expert = Some(ScriptedExpert::new(input.state)?);
        }
        Ok(self
            .expert
            .as_mut()
            .expect("expert initialized")
            .act(input.state))
    }
}

/// Uniform random actions at the clamp limits; a negative control.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn observation_space(&self) -> Option<ObservationSpace> {
        None
    }

    fn reset(&mut self, _state: &SceneState, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e64);
        Ok(())
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action> {
        let p = input.state.props.sim;
        let arms = (0..input.state.num_arms())
            .map(|_| {
                let mut v = |s: f64| [0; 3].map(|_| self.rng.random_range(-s..=s));
                ArmAction {
                    dpos: v(p.max_step_translation),
                    drot: v(p.max_step_rotation),
                    jaw: if self.rng.random_bool(0.5) {
                        JawCommand::Close
                    } else {
                        JawCommand::Open
                    },
                }
            })
            .collect();
        Ok(Action { arms })
    }
}

#[derive(Clone, Debug)]
pub struct RolloutConfig {
    pub rig: Option<CameraRig>,
    pub perception: PerceptionConfig,
    /// Stop as soon as the task is solved instead of running to the horizon.
    pub stop_on_success: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            rig: None,
            perception: PerceptionConfig::default(),
            stop_on_success: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RolloutResult {
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
    pub final_state: SceneState,
}

/// Run one episode of `policy` from `seed`.
pub fn rollout(
    policy: &mut dyn Policy,
    spec: &TaskSpec,
    seed: u64,
    config: &RolloutConfig,
) -> Result<RolloutResult> {
    let mut state = reset_task(spec, seed)?;
    policy.reset(&state, seed)?;
    let space = policy.observation_space();
    let mut trajectory = vec![state.clone()];
    let mut success = false;
    while !state.is_over() {
        let obs = match (space, &config.rig) {
            (Some(space), Some(rig)) => {
                Some(build_observation(&state, rig, space, &config.perception)?)
            }
            (Some(_), None) => {
                return Err(crate::Error::config(format!(
                    "policy {} needs a camera rig",
                    policy.name()
                )))
            }
            (None, _) => None,
        };
        let action = policy.act(&PolicyInput {
            state: &state,
            observation: obs.as_ref(),
        })?;
        state = state.step(&action.quantized())?;
        trajectory.push(state.clone());
        if config.stop_on_success && check_success(spec, &trajectory) {
            success = true;
            break;
        }
    }
    if !config.stop_on_success {
        success = check_success(spec, &trajectory);
    }
    Ok(RolloutResult {
        seed,
        success,
        steps: state.step_count,
        final_state: state,
    })
}
