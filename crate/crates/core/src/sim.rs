//! Kinematic simulator: floating Cartesian grippers, rigid grasp attachment
//! and a constant-speed drop for released objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_norm, rotation_from_axis_angle, Pose};
use crate::layout::{self, Body, ObjectId, BLOCK, NEEDLE, TISSUE};
use crate::needle::{generate_needle, NeedleGeometry};
use crate::task::{SimParams, TaskName, TaskSpec};

/// Number of centerline samples used for needle features and rendering.
pub const NEEDLE_SAMPLES: usize = 33;
/// Values per arm in the flat action vector: dpos(3), drot(3), jaw(1).
pub const ACTION_DIM_PER_ARM: usize = 7;
/// Values per arm in the proprioception vector: position(3), quaternion(4), jaw(1).
pub const PROPRIO_DIM_PER_ARM: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JawCommand {
    #[default]
    Open,
    Close,
}

impl JawCommand {
    pub fn as_f64(self) -> f64 {
        match self {
            JawCommand::Open => 0.0,
            JawCommand::Close => 1.0,
        }
    }

    /// Threshold at 0.5, the midpoint of the two encodings.
    pub fn from_f64(v: f64) -> Self {
        if v > 0.5 {
            JawCommand::Close
        } else {
            JawCommand::Open
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmAction {
    pub dpos: [f64; 3],
    pub drot: [f64; 3],
    pub jaw: JawCommand,
}

impl ArmAction {
    pub fn hold(jaw: JawCommand) -> Self {
        ArmAction {
            jaw,
            ..Default::default()
        }
    }
}

/// One relative end-effector command per arm.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub arms: Vec<ArmAction>,
}

impl Action {
    pub fn zero(num_arms: usize) -> Self {
        Action {
            arms: vec![ArmAction::default(); num_arms],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.arms.len() * ACTION_DIM_PER_ARM);
        for a in &self.arms {
            out.extend_from_slice(&a.dpos);
            out.extend_from_slice(&a.drot);
            out.push(a.jaw.as_f64());
        }
        out
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(ACTION_DIM_PER_ARM) {
            return Err(Error::InvalidArgument(format!(
                "action vector length {} is not a multiple of {ACTION_DIM_PER_ARM}",
                values.len()
            )));
        }
        let arms = values
            .chunks(ACTION_DIM_PER_ARM)
            .map(|c| ArmAction {
                dpos: [c[0], c[1], c[2]],
                drot: [c[3], c[4], c[5]],
                jaw: JawCommand::from_f64(c[6]),
            })
            .collect();
        Ok(Action { arms })
    }

    /// Round every component through `f32`, the precision actions are stored at.
    pub fn quantized(&self) -> Self {
        let q = |v: [f64; 3]| v.map(|c| c as f32 as f64);
        Action {
            arms: self
                .arms
                .iter()
                .map(|a| ArmAction {
                    dpos: q(a.dpos),
                    drot: q(a.drot),
                    jaw: a.jaw,
                })
                .collect(),
        }
    }

    /// Apply the per-step translation and rotation clamps.
    pub fn clamped(&self, params: &SimParams) -> Self {
        Action {
            arms: self
                .arms
                .iter()
                .map(|a| {
                    let d = clamp_norm(Vector3::from(a.dpos), params.max_step_translation);
                    let r = clamp_norm(Vector3::from(a.drot), params.max_step_rotation);
                    ArmAction {
                        dpos: [d.x, d.y, d.z],
                        drot: [r.x, r.y, r.z],
                        jaw: a.jaw,
                    }
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arms
            .iter()
            .all(|a| a.dpos.iter().chain(a.drot.iter()).all(|c| c.is_finite()))
    }
}

/// An arm's hold on an object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub object: ObjectId,
    /// Object pose expressed in the gripper frame.
    pub object_in_gripper: Pose,
    /// Grasped feature in the object frame.
    pub local_point: [f64; 3],
    pub since_step: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub ee_pose: Pose,
    pub jaw: f64,
    pub jaw_cmd: JawCommand,
    pub attached: Option<Grasp>,
}

impl ArmState {
    pub fn attached_id(&self) -> Option<ObjectId> {
        self.attached.map(|g| g.object)
    }

    pub fn proprio(&self) -> [f64; PROPRIO_DIM_PER_ARM] {
        let p = self.ee_pose.position;
        let q = self.ee_pose.orientation;
        [p[0], p[1], p[2], q[0], q[1], q[2], q[3], self.jaw]
    }

    /// Pose and jaw from one arm's proprioception block.
    pub fn parse_proprio(values: &[f64]) -> Result<(Pose, f64)> {
        if values.len() != PROPRIO_DIM_PER_ARM {
            return Err(Error::InvalidArgument(format!(
                "arm proprio block has {} values, expected {PROPRIO_DIM_PER_ARM}",
                values.len()
            )));
        }
        let pose = Pose {
            position: [values[0], values[1], values[2]],
            orientation: [values[3], values[4], values[5], values[6]],
        };
        Ok((pose, values[7]))
    }
}

/// Seedable generator owned by one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

/// Per-episode constants: geometry, randomization draws and reference heights.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneProps {
    pub task: TaskName,
    pub seed: u64,
    pub horizon: u32,
    pub sim: SimParams,
    pub success: crate::task::SuccessParams,
    pub needle: Option<NeedleGeometry>,
    pub needle_name: String,
    /// Grasp marker on the tissue flap, in the tissue frame.
    pub marker_local: Option<[f64; 3]>,
    pub start_peg: Option<usize>,
    pub statics: Vec<Body>,
    pub initial_objects: BTreeMap<ObjectId, Pose>,
    /// Sampled randomization values as `(name, value)` pairs.
    pub offsets: Vec<(String, f64)>,
}

impl SceneProps {
    /// Graspable features of `object` in its local frame.
    pub fn features(&self, object: ObjectId) -> Vec<Vector3<f64>> {
        match object {
            NEEDLE => self
                .needle
                .as_ref()
                .map(|n| n.features().collect())
                .unwrap_or_default(),
            TISSUE => layout::tissue_features()
                .into_iter()
                .map(Vector3::from)
                .collect(),
            BLOCK => layout::block_features()
                .into_iter()
                .map(Vector3::from)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Local z offset from the object origin down to its lowest surface point.
    fn rest_offset(&self, object: ObjectId) -> f64 {
        match object {
            NEEDLE => self.needle.as_ref().map(|n| -n.min_z()).unwrap_or(0.0),
            TISSUE => 2.0 * layout::TISSUE_HALF[2],
            BLOCK => layout::BLOCK_HALF[2],
            _ => 0.0,
        }
    }

    pub fn rest_height(&self, object: ObjectId, x: f64, y: f64) -> f64 {
        layout::support_height(self.task, x, y) + self.rest_offset(object)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneState {
    pub arms: Vec<ArmState>,
    pub objects: BTreeMap<ObjectId, Pose>,
    pub step_count: u32,
    pub rng: SimRng,
    pub props: Arc<SceneProps>,
}

/// Sample an initial scene for `spec` from `seed`.
pub fn reset_task(spec: &TaskSpec, seed: u64) -> Result<SceneState> {
    spec.validate()?;
    let task = spec.name;
    let mut rng = SimRng::from_seed(seed);
    let ranges = spec.randomization;
    let mut objects = BTreeMap::new();
    let mut offsets = Vec::new();
    let mut needle = None;
    let mut marker_local = None;
    let mut start_peg = None;

    let uniform = |half: f64, rng: &mut SimRng| -> f64 {
        if half > 0.0 {
            rng.inner().random_range(-half..=half)
        } else {
            0.0
        }
    };

    match task {
        TaskName::NeedleLift | TaskName::NeedleHandover | TaskName::SuturePad => {
            let geometry = generate_needle(&spec.resolved_needle()?, NEEDLE_SAMPLES)?;
            let dx = uniform(ranges.offset_x, &mut rng);
            let dy = uniform(ranges.offset_y, &mut rng);
            offsets.push(("x".to_string(), dx));
            offsets.push(("y".to_string(), dy));
            let (nominal, yaw) = layout::needle_nominal(task);
            let x = nominal.x + dx;
            let y = nominal.y + dy;
            let z = layout::support_height(task, x, y) - geometry.min_z();
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
            objects.insert(NEEDLE, Pose::new(Vector3::new(x, y, z), rot));
            needle = Some(geometry);
        }
        TaskName::TissueRetraction => {
            let dx = uniform(ranges.offset_x, &mut rng);
            offsets.push(("x".to_string(), dx));
            marker_local = Some([dx, layout::TISSUE_EDGE_Y, 0.0]);
            objects.insert(
                TISSUE,
                Pose::from_translation(Vector3::new(0.0, 0.0, 2.0 * layout::TISSUE_HALF[2])),
            );
        }
        TaskName::BlockTransfer => {
            let pegs = (ranges.pegs as usize).min(layout::START_PEGS.len());
            let peg = rng.inner().random_range(0..pegs);
            offsets.push(("peg".to_string(), peg as f64));
            start_peg = Some(peg);
            let [x, y] = layout::START_PEGS[peg];
            objects.insert(
                BLOCK,
                Pose::from_translation(Vector3::new(x, y, layout::BLOCK_HALF[2])),
            );
        }
    }

    let arms = (0..spec.num_arms)
        .map(|i| ArmState {
            ee_pose: layout::arm_home(task, i),
            jaw: spec.sim.jaw_max,
            jaw_cmd: JawCommand::Open,
            attached: None,
        })
        .collect();

    let props = SceneProps {
        task,
        seed,
        horizon: spec.horizon,
        sim: spec.sim,
        success: spec.success,
        needle,
        needle_name: spec.needle.clone(),
        marker_local,
        start_peg,
        statics: layout::static_bodies(task),
        initial_objects: objects.clone(),
        offsets,
    };
    Ok(SceneState {
        arms,
        objects,
        step_count: 0,
        rng,
        props: Arc::new(props),
    })
}

impl SceneState {
    pub fn task(&self) -> TaskName {
        self.props.task
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn is_over(&self) -> bool {
        self.step_count >= self.props.horizon
    }

    /// Object pose, if present.
    pub fn object(&self, id: ObjectId) -> Option<&Pose> {
        self.objects.get(&id)
    }

    /// World position of feature `index` of `object`.
    pub fn feature_world(&self, object: ObjectId, index: usize) -> Option<Vector3<f64>> {
        let pose = self.objects.get(&object)?;
        let f = self.props.features(object).get(index).copied()?;
        Some(pose.transform_point(&f))
    }

    /// Arms currently holding `object`.
    pub fn holders(&self, object: ObjectId) -> impl Iterator<Item = usize> + '_ {
        self.arms
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.attached_id() == Some(object))
            .map(|(i, _)| i)
    }

    /// Advance one control step.
    pub fn step(&self, action: &Action) -> Result<SceneState> {
        if self.is_over() {
            return Err(Error::EpisodeOver {
                step: self.step_count,
                horizon: self.props.horizon,
            });
        }
        if action.arms.len() != self.arms.len() {
            return Err(Error::InvalidArgument(format!(
                "action has {} arm commands for {} arms",
                action.arms.len(),
                self.arms.len()
            )));
        }
        if !action.is_finite() {
            return Err(Error::InvalidArgument(
                "action contains non-finite values".into(),
            ));
        }
        let params = self.props.sim;
        let action = action.clamped(&params);
        let mut next = self.clone();

        for (arm, cmd) in next.arms.iter_mut().zip(&action.arms) {
            let rot = rotation_from_axis_angle(&Vector3::from(cmd.drot)) * arm.ee_pose.rotation();
            let rot = UnitQuaternion::new_normalize(rot.into_inner());
            let pos = arm.ee_pose.translation() + Vector3::from(cmd.dpos);
            arm.ee_pose = Pose::new(pos, rot);
        }

        for i in 0..next.arms.len() {
            next.update_jaw(i, action.arms[i].jaw);
        }
        next.carry_attached();
        next.drop_free_objects();
        next.step_count += 1;
        Ok(next)
    }

    fn update_jaw(&mut self, arm_index: usize, cmd: JawCommand) {
        let params = self.props.sim;
        let before = self.arms[arm_index].jaw;
        self.arms[arm_index].jaw_cmd = cmd;
        match cmd {
            JawCommand::Open => {
                let arm = &mut self.arms[arm_index];
                arm.attached = None;
                arm.jaw = (arm.jaw + params.jaw_rate).min(params.jaw_max);
            }
            JawCommand::Close => {
                if self.arms[arm_index].attached.is_some() {
                    return;
                }
                let after = (before - params.jaw_rate).max(0.0);
                let crossed =
                    before > params.jaw_close_threshold && after <= params.jaw_close_threshold;
                if crossed {
                    if let Some(grasp) = self.find_grasp(arm_index) {
                        let arm = &mut self.arms[arm_index];
                        arm.attached = Some(grasp);
                        arm.jaw = params.jaw_close_threshold;
                        return;
                    }
                }
                self.arms[arm_index].jaw = after;
            }
        }
    }

    /// Nearest graspable feature within the grasp radius; ties go to the lowest object id.
    fn find_grasp(&self, arm_index: usize) -> Option<Grasp> {
        let ee = self.arms[arm_index].ee_pose;
        let tip = ee.translation();
        let mut best: Option<(f64, ObjectId, Vector3<f64>)> = None;
        for (&id, pose) in &self.objects {
            for f in self.props.features(id) {
                let d = (pose.transform_point(&f) - tip).norm();
                if d > self.props.sim.grasp_radius {
                    continue;
                }
                // Objects iterate in ascending id order, so strict `<` keeps the lowest id on ties.
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, id, f));
                }
            }
        }
        best.map(|(_, id, f)| Grasp {
            object: id,
            object_in_gripper: ee.inverse().compose(&self.objects[&id]),
            local_point: [f.x, f.y, f.z],
            since_step: self.step_count,
        })
    }

    /// Move held objects with their driving gripper: the most recent grasp wins,
    /// ties to the lowest arm index. Other holders re-anchor to the new pose.
    fn carry_attached(&mut self) {
        let ids: Vec<ObjectId> = self.objects.keys().copied().collect();
        for id in ids {
            let mut driver: Option<(u32, usize)> = None;
            for (i, arm) in self.arms.iter().enumerate() {
                if let Some(g) = arm.attached.filter(|g| g.object == id) {
                    if driver.is_none_or(|(since, _)| g.since_step > since) {
                        driver = Some((g.since_step, i));
                    }
                }
            }
            let Some((_, d)) = driver else { continue };
            let arm = &self.arms[d];
            let grasp = arm.attached.expect("driver holds a grasp");
            let pose = arm.ee_pose.compose(&grasp.object_in_gripper);
            self.objects.insert(id, pose);
            for (i, arm) in self.arms.iter_mut().enumerate() {
                if i == d {
                    continue;
                }
                if let Some(g) = arm.attached.as_mut().filter(|g| g.object == id) {
                    g.object_in_gripper = arm.ee_pose.inverse().compose(&pose);
                }
            }
        }
    }

    fn drop_free_objects(&mut self) {
        let held: Vec<ObjectId> = self.arms.iter().filter_map(|a| a.attached_id()).collect();
        let fall = self.props.sim.fall_speed;
        for (id, pose) in self.objects.iter_mut() {
            if held.contains(id) {
                continue;
            }
            let [x, y, z] = pose.position;
            let rest = self.props.rest_height(*id, x, y);
            if z > rest {
                pose.position[2] = (z - fall).max(rest);
            }
        }
    }
}

/// Flat proprioception vector: per arm `[position(3), quaternion wxyz(4), jaw(1)]`.
pub fn get_proprio(state: &SceneState) -> Vec<f64> {
    state.arms.iter().flat_map(|a| a.proprio()).collect()
}
