//! Privileged-state scripted experts and demonstration collection.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Capture, DemonstrationSet, Episode, EpisodeRecorder, Source};
use crate::error::{Error, Result};
use crate::geometry::clamp_norm;
use crate::layout::{self, ObjectId, BLOCK, LEFT_ARM, NEEDLE, RIGHT_ARM, TISSUE};
use crate::sim::{reset_task, Action, ArmAction, JawCommand, SceneState};
use crate::success::check_success;
use crate::task::{TaskName, TaskSpec};

/// Where an arm should go, resolved against the live scene every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Absolute(Vector3<f64>),
    /// A feature of an object in world coordinates plus an offset.
    Feature {
        object: ObjectId,
        index: usize,
        offset: Vector3<f64>,
    },
    /// Gripper position that would put a feature of a held object at `goal`.
    MoveFeature {
        object: ObjectId,
        index: usize,
        goal: Vector3<f64>,
    },
    /// Stay where the arm was when the waypoint began.
    Hold,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Until {
    Reached,
    Attached { arm: usize, object: ObjectId },
    Steps(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    /// One `(target, jaw)` pair per arm.
    pub arms: Vec<(Target, JawCommand)>,
    pub until: Until,
    pub tolerance: f64,
    pub max_dwell: u32,
    /// Waypoint to jump back to if `max_dwell` runs out; `None` advances anyway.
    pub retry_from: Option<usize>,
}

impl Waypoint {
    fn new(arms: Vec<(Target, JawCommand)>, until: Until) -> Self {
        Self {
            arms,
            until,
            tolerance: 0.0015,
            max_dwell: 40,
            retry_from: None,
        }
    }

    fn retry(mut self, index: usize) -> Self {
        self.retry_from = Some(index);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaypointPlan {
    pub waypoints: Vec<Waypoint>,
}

fn feature(object: ObjectId, index: usize, dz: f64) -> Target {
    Target::Feature {
        object,
        index,
        offset: Vector3::new(0.0, 0.0, dz),
    }
}

const OPEN: JawCommand = JawCommand::Open;
const CLOSE: JawCommand = JawCommand::Close;
const HOVER: f64 = 0.015;

/// Approach above a feature, descend onto it and close until attached.
fn grasp_steps(
    plan: &mut Vec<Waypoint>,
    arm: usize,
    num_arms: usize,
    others: &[(Target, JawCommand)],
    object: ObjectId,
    index: usize,
) {
    let with = |t: Target, j: JawCommand| -> Vec<(Target, JawCommand)> {
        (0..num_arms)
            .map(|i| if i == arm { (t, j) } else { others[i] })
            .collect()
    };
    let start = plan.len();
    plan.push(Waypoint::new(
        with(feature(object, index, HOVER), OPEN),
        Until::Reached,
    ));
    plan.push(Waypoint::new(with(feature(object, index, 0.0), OPEN), Until::Reached).retry(start));
    let mut close = Waypoint::new(
        with(feature(object, index, 0.0), CLOSE),
        Until::Attached { arm, object },
    );
    close.max_dwell = 8;
    plan.push(close.retry(start));
}

/// Task-specific plan built from the reset scene.
pub fn plan_for(state: &SceneState) -> Result<WaypointPlan> {
    let n = state.num_arms();
    let mut w = Vec::new();
    match state.task() {
        TaskName::NeedleLift => {
            let g = state
                .props
                .needle
                .as_ref()
                .ok_or_else(|| Error::config("needle missing"))?;
            let idx = g.mid_index();
            grasp_steps(&mut w, 0, n, &[], NEEDLE, idx);
            let start = state.feature_world(NEEDLE, idx).expect("needle feature");
            let goal = start + Vector3::new(0.0, 0.0, 0.03);
            w.push(Waypoint::new(
                vec![(
                    Target::MoveFeature {
                        object: NEEDLE,
                        index: idx,
                        goal,
                    },
                    CLOSE,
                )],
                Until::Reached,
            ));
            w.push(Waypoint::new(vec![(Target::Hold, CLOSE)], Until::Steps(3)));
        }
        TaskName::TissueRetraction => {
            let marker = Vector3::from(state.props.marker_local.expect("marker"));
            let feats = state.props.features(TISSUE);
            let idx = (0..feats.len())
                .min_by(|&a, &b| {
                    (feats[a] - marker)
                        .norm()
                        .total_cmp(&(feats[b] - marker).norm())
                })
                .expect("tissue features");
            grasp_steps(&mut w, 0, n, &[], TISSUE, idx);
            let start = state.feature_world(TISSUE, idx).expect("tissue feature");
            let goal = start + Vector3::new(0.0, -0.005, 0.03);
            w.push(Waypoint::new(
                vec![(
                    Target::MoveFeature {
                        object: TISSUE,
                        index: idx,
                        goal,
                    },
                    CLOSE,
                )],
                Until::Reached,
            ));
            w.push(Waypoint::new(vec![(Target::Hold, CLOSE)], Until::Steps(3)));
        }
        TaskName::NeedleHandover => {
            let g = state
                .props
                .needle
                .as_ref()
                .ok_or_else(|| Error::config("needle missing"))?;
            let right_idx = g.index_at(0.8);
            let left_idx = g.index_at(0.2);
            let hold = [(Target::Hold, OPEN), (Target::Hold, OPEN)];
            grasp_steps(&mut w, RIGHT_ARM, n, &hold, NEEDLE, right_idx);
            let mid = g.mid_index();
            let lift = Target::MoveFeature {
                object: NEEDLE,
                index: mid,
                goal: layout::needle_handover_point(),
            };
            w.push(Waypoint::new(
                vec![(lift, CLOSE), (Target::Hold, OPEN)],
                Until::Reached,
            ));
            let carried = [(Target::Hold, CLOSE), (Target::Hold, OPEN)];
            grasp_steps(&mut w, LEFT_ARM, n, &carried, NEEDLE, left_idx);
            // Release with the right arm, then back it away.
            w.push(Waypoint::new(
                vec![(Target::Hold, OPEN), (Target::Hold, CLOSE)],
                Until::Steps(2),
            ));
            w.push(Waypoint::new(
                vec![
                    (
                        Target::Absolute(
                            layout::arm_home(TaskName::NeedleHandover, RIGHT_ARM).translation(),
                        ),
                        OPEN,
                    ),
                    (Target::Hold, CLOSE),
                ],
                Until::Steps(3),
            ));
        }
        TaskName::SuturePad => {
            let g = state
                .props
                .needle
                .as_ref()
                .ok_or_else(|| Error::config("needle missing"))?;
            let idx = g.index_at(0.25);
            let tip = g.tip_index();
            grasp_steps(&mut w, 0, n, &[], NEEDLE, idx);
            let [hx, hz] = layout::HOLE_CENTER_XZ;
            let [entry, exit] = layout::WALL_Y;
            let tip_to = |y: f64| Target::MoveFeature {
                object: NEEDLE,
                index: tip,
                goal: Vector3::new(hx, y, hz),
            };
            // Lift clear of the pad before lining up with the hole.
            let lift_goal =
                state.feature_world(NEEDLE, tip).expect("tip") + Vector3::new(0.0, 0.0, 0.02);
            w.push(Waypoint::new(
                vec![(
                    Target::MoveFeature {
                        object: NEEDLE,
                        index: tip,
                        goal: lift_goal,
                    },
                    CLOSE,
                )],
                Until::Reached,
            ));
            let mut align = Waypoint::new(vec![(tip_to(entry - 0.006), CLOSE)], Until::Reached);
            align.tolerance = 0.0005;
            w.push(align);
            w.push(Waypoint::new(
                vec![(tip_to(exit + 0.006), CLOSE)],
                Until::Reached,
            ));
            w.push(Waypoint::new(vec![(Target::Hold, CLOSE)], Until::Steps(2)));
        }
        TaskName::BlockTransfer => {
            let idx = 0;
            grasp_steps(&mut w, 0, n, &[], BLOCK, idx);
            let local = Vector3::from(layout::block_features()[idx]);
            let [gx, gy] = layout::GOAL_PEG;
            let carry_z = layout::PEG_HEIGHT + 0.012;
            let up = state.object(BLOCK).expect("block").translation();
            let feature_at = |x: f64, y: f64, z: f64| Target::MoveFeature {
                object: BLOCK,
                index: idx,
                goal: Vector3::new(x, y, z) + local,
            };
            w.push(Waypoint::new(
                vec![(feature_at(up.x, up.y, carry_z), CLOSE)],
                Until::Reached,
            ));
            let mut over =
                Waypoint::new(vec![(feature_at(gx, gy, carry_z), CLOSE)], Until::Reached);
            over.tolerance = 0.0005;
            w.push(over);
            let mut lower = Waypoint::new(
                vec![(
                    feature_at(gx, gy, layout::PEG_HEIGHT + layout::BLOCK_HALF[2] + 0.002),
                    CLOSE,
                )],
                Until::Reached,
            );
            lower.tolerance = 0.0005;
            w.push(lower);
            w.push(Waypoint::new(vec![(Target::Hold, OPEN)], Until::Steps(2)));
            let clear = layout::arm_home(TaskName::BlockTransfer, 0).translation();
            w.push(Waypoint::new(
                vec![(Target::Absolute(clear), OPEN)],
                Until::Steps(4),
            ));
        }
    }
    Ok(WaypointPlan { waypoints: w })
}

/// Stateful plan follower with a proportional controller.
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    plan: WaypointPlan,
    current: usize,
    dwell: u32,
    anchors: Vec<Vector3<f64>>,
    home: Vec<UnitQuaternion<f64>>,
}

impl ScriptedExpert {
    pub fn new(state: &SceneState) -> Result<Self> {
        let plan = plan_for(state)?;
        Ok(Self::with_plan(state, plan))
    }

    pub fn with_plan(state: &SceneState, plan: WaypointPlan) -> Self {
        Self {
            plan,
            current: 0,
            dwell: 0,
            anchors: state.arms.iter().map(|a| a.ee_pose.translation()).collect(),
            home: (0..state.num_arms())
                .map(|i| layout::arm_home(state.task(), i).rotation())
                .collect(),
        }
    }

    pub fn plan(&self) -> &WaypointPlan {
        &self.plan
    }

    pub fn waypoint_index(&self) -> usize {
        self.current
    }

    pub fn is_done(&self) -> bool {
        self.current >= self.plan.waypoints.len()
    }

    fn resolve(&self, state: &SceneState, arm: usize, target: &Target) -> Vector3<f64> {
        let ee = state.arms[arm].ee_pose.translation();
        match *target {
            Target::Absolute(p) => p,
            Target::Hold => self.anchors[arm],
            Target::Feature {
                object,
                index,
                offset,
            } => state
                .feature_world(object, index)
                .map(|f| f + offset)
                .unwrap_or(ee),
            Target::MoveFeature {
                object,
                index,
                goal,
            } => match state.feature_world(object, index) {
                Some(f) => ee + (goal - f),
                None => ee,
            },
        }
    }

    fn satisfied(&self, state: &SceneState, wp: &Waypoint) -> bool {
        match wp.until {
            Until::Reached => wp.arms.iter().enumerate().all(|(i, (t, _))| {
                (self.resolve(state, i, t) - state.arms[i].ee_pose.translation()).norm()
                    <= wp.tolerance
            }),
            Until::Attached { arm, object } => state.arms[arm].attached_id() == Some(object),
            Until::Steps(n) => self.dwell >= n,
        }
    }

    fn enter(&mut self, state: &SceneState, index: usize) {
        self.current = index;
        self.dwell = 0;
        self.anchors = state.arms.iter().map(|a| a.ee_pose.translation()).collect();
    }

    /// Advance through satisfied waypoints, then emit the controller action.
    pub fn act(&mut self, state: &SceneState) -> Action {
        let params = state.props.sim;
        while let Some(wp) = self.plan.waypoints.get(self.current).cloned() {
            if self.satisfied(state, &wp) {
                self.enter(state, self.current + 1);
                continue;
            }
            if self.dwell >= wp.max_dwell {
                let next = wp.retry_from.unwrap_or(self.current + 1);
                self.enter(state, next);
                if wp.retry_from.is_some() {
                    break;
                }
                continue;
            }
            break;
        }
        self.dwell += 1;
        let Some(wp) = self.plan.waypoints.get(self.current).cloned() else {
            // Plan finished: hold still with the last jaw commands.
            return Action {
                arms: state
                    .arms
                    .iter()
                    .map(|a| ArmAction::hold(a.jaw_cmd))
                    .collect(),
            };
        };
        let arms = wp
            .arms
            .iter()
            .enumerate()
            .map(|(i, (target, jaw))| {
                let ee = state.arms[i].ee_pose;
                let d = clamp_norm(
                    self.resolve(state, i, target) - ee.translation(),
                    params.max_step_translation,
                );
                let r = clamp_norm(
                    (self.home[i] * ee.rotation().inverse()).scaled_axis(),
                    params.max_step_rotation,
                );
                ArmAction {
                    dpos: [d.x, d.y, d.z],
                    drot: [r.x, r.y, r.z],
                    jaw: *jaw,
                }
            })
            .collect();
        Action { arms }
    }
}

/// One-shot expert action for a fresh plan. Stateful rollouts should keep a
/// [`ScriptedExpert`] instead.
pub fn expert_action(state: &SceneState) -> Result<Action> {
    let mut expert = ScriptedExpert::new(state)?;
    Ok(expert.act(state))
}

/// Uniform action noise in units of the per-step clamps.
fn noisy(action: &Action, scale: f64, rng: &mut ChaCha8Rng, spec: &TaskSpec) -> Action {
    if scale <= 0.0 {
        return action.clone();
    }
    let t = scale * spec.sim.max_step_translation;
    let r = scale * spec.sim.max_step_rotation;
    let mut out = action.clone();
    for arm in &mut out.arms {
        for c in &mut arm.dpos {
            *c += rng.random_range(-t..=t);
        }
        for c in &mut arm.drot {
            *c += rng.random_range(-r..=r);
        }
    }
    out
}

/// Outcome of one expert episode.
pub struct ExpertRun {
    pub episode: Episode,
    pub trajectory: Vec<SceneState>,
    pub success: bool,
}

/// Settling steps appended after the plan ends so dropped objects come to rest.
const SETTLE_STEPS: u32 = 4;

pub fn run_expert(
    spec: &TaskSpec,
    seed: u64,
    noise_scale: f64,
    capture: Option<Capture>,
) -> Result<ExpertRun> {
    let mut state = reset_task(spec, seed)?;
    let mut expert = ScriptedExpert::new(&state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_6500_0000);
    let mut recorder = EpisodeRecorder::new(spec, seed, Source::Scripted, capture);
    let mut trajectory = vec![state.clone()];
    let mut settle = 0;
    while !state.is_over() && settle < SETTLE_STEPS {
        let action = noisy(&expert.act(&state), noise_scale, &mut rng, spec);
        let stored = recorder.record(&state, &action)?;
        state = state.step(&stored)?;
        trajectory.push(state.clone());
        if expert.is_done() {
            settle += 1;
        }
    }
    let success = check_success(spec, &trajectory);
    let episode = recorder.finish(&state, success)?;
    Ok(ExpertRun {
        episode,
        trajectory,
        success,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectConfig {
    pub count: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub capture: Option<Capture>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectStats {
    pub attempts: usize,
    pub kept: usize,
    pub seeds: Vec<u64>,
}

/// Run the expert from consecutive seeds, keeping only successful episodes,
/// until `count` are stored. Aborts if the success rate falls below one half.
pub fn collect(
    spec: &TaskSpec,
    root: &std::path::Path,
    config: &CollectConfig,
) -> Result<(DemonstrationSet, CollectStats)> {
    if config.count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let mut set = DemonstrationSet::create(root, spec.name, config.capture.clone())?;
    let mut stats = CollectStats {
        attempts: 0,
        kept: 0,
        seeds: Vec::new(),
    };
    let mut seed = config.seed;
    while stats.kept < config.count {
        let run = run_expert(spec, seed, config.noise_scale, config.capture.clone())?;
        stats.attempts += 1;
        if run.success {
            set.append(&run.episode)?;
            stats.kept += 1;
            stats.seeds.push(seed);
        }
        seed += 1;
        if stats.attempts >= 10 && stats.kept * 2 < stats.attempts {
            return Err(Error::Collection(format!(
                "{} expert on {}: {} of {} attempts succeeded (noise {})",
                spec.name, spec.needle, stats.kept, stats.attempts, config.noise_scale
            )));
        }
    }
    Ok((set, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_sign_toward_needle() {
        let spec = TaskSpec::default_for(TaskName::NeedleLift);
        let mut state = reset_task(&spec, 0).unwrap();
        let f = state
            .feature_world(NEEDLE, state.props.needle.as_ref().unwrap().mid_index())
            .unwrap();
        let rot = state.arms[0].ee_pose.rotation();
        state.arms[0].ee_pose = crate::Pose::new(f + Vector3::new(-0.02, 0.0, HOVER), rot);
        let a = expert_action(&state).unwrap();
        assert!(a.arms[0].dpos[0] > 0.0);
    }

    #[test]
    fn finished_plan_holds_still() {
        let spec = TaskSpec::default_for(TaskName::NeedleLift);
        let run = run_expert(&spec, 2, 0.0, None).unwrap();
        assert!(run.success);
        let last = run.episode.action_rows().unwrap().last().unwrap().clone();
        assert!(last[..6].iter().all(|v| *v == 0.0));
        assert_eq!(last[6], 1.0);
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let spec = TaskSpec::default_for(TaskName::SuturePad);
        let a = run_expert(&spec, 5, 0.0, None).unwrap();
        let b = run_expert(&spec, 5, 0.0, None).unwrap();
        assert_eq!(a.episode, b.episode);
    }
}
