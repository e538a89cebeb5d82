//! Per-task success predicates over a trajectory of scene states.

use nalgebra::Vector3;

use crate::layout::{self, BLOCK, LEFT_ARM, NEEDLE, RIGHT_ARM, TISSUE};
use crate::sim::SceneState;
use crate::task::{TaskName, TaskSpec};

/// Whether `trajectory` accomplishes the task. An empty trajectory is a failure.
pub fn check_success(spec: &TaskSpec, trajectory: &[SceneState]) -> bool {
    if trajectory.is_empty() {
        return false;
    }
    match spec.name {
        TaskName::NeedleLift => trajectory.iter().any(|s| needle_lifted(spec, s)),
        TaskName::TissueRetraction => trajectory.iter().any(|s| tissue_retracted(spec, s)),
        TaskName::NeedleHandover => handover_succeeded(trajectory),
        TaskName::SuturePad => needle_threaded(spec, trajectory),
        TaskName::BlockTransfer => trajectory.iter().any(|s| block_on_goal(spec, s)),
    }
}

/// Success test on a single state for tasks whose predicate is pointwise.
/// Sequence tasks report `None`.
pub fn state_success(spec: &TaskSpec, state: &SceneState) -> Option<bool> {
    match spec.name {
        TaskName::NeedleLift => Some(needle_lifted(spec, state)),
        TaskName::TissueRetraction => Some(tissue_retracted(spec, state)),
        TaskName::BlockTransfer => Some(block_on_goal(spec, state)),
        TaskName::NeedleHandover | TaskName::SuturePad => None,
    }
}

fn needle_lifted(spec: &TaskSpec, s: &SceneState) -> bool {
    let (Some(pose), Some(start)) = (s.objects.get(&NEEDLE), s.props.initial_objects.get(&NEEDLE))
    else {
        return false;
    };
    s.holders(NEEDLE).next().is_some()
        && pose.position[2] >= start.position[2] + spec.success.lift_height
}

fn tissue_retracted(spec: &TaskSpec, s: &SceneState) -> bool {
    let (Some(pose), Some(start), Some(marker)) = (
        s.objects.get(&TISSUE),
        s.props.initial_objects.get(&TISSUE),
        s.props.marker_local,
    ) else {
        return false;
    };
    let marker = Vector3::from(marker);
    let on_marker = s.arms.iter().any(|a| {
        a.attached.is_some_and(|g| {
            g.object == TISSUE
                && (Vector3::from(g.local_point) - marker).norm()
                    <= spec.success.grasp_region_tolerance
        })
    });
    let z0 = start.transform_point(&marker).z;
    let z = pose.transform_point(&marker).z;
    on_marker && z >= z0 + spec.success.lift_height
}

fn handover_succeeded(trajectory: &[SceneState]) -> bool {
    let held_by =
        |s: &SceneState, arm: usize| s.arms.get(arm).and_then(|a| a.attached_id()) == Some(NEEDLE);
    let above_table = |s: &SceneState| s.objects.get(&NEEDLE).is_some_and(|p| p.position[2] >= 0.0);
    let Some(first_right) = trajectory.iter().position(|s| held_by(s, RIGHT_ARM)) else {
        return false;
    };
    // From the first right-arm grasp on, the needle must stay held until the
    // left arm has it alone.
    for s in &trajectory[first_right..] {
        if !above_table(s) {
            return false;
        }
        let right = held_by(s, RIGHT_ARM);
        let left = held_by(s, LEFT_ARM);
        if !right && !left {
            return false;
        }
        if left && !right {
            return true;
        }
    }
    false
}

fn needle_threaded(spec: &TaskSpec, trajectory: &[SceneState]) -> bool {
    let r = spec.success.hole_radius;
    let [entry, exit] = layout::WALL_Y;
    let tip = |s: &SceneState| -> Option<Vector3<f64>> {
        let geom = s.props.needle.as_ref()?;
        let pose = s.objects.get(&NEEDLE)?;
        Some(pose.transform_point(&geom.point(geom.tip_index())))
    };
    // Radial distance from the hole axis where segment a->b crosses plane y = plane.
    let crossing = |a: &Vector3<f64>, b: &Vector3<f64>, plane: f64| -> Option<f64> {
        if !(a.y < plane && b.y >= plane) {
            return None;
        }
        let t = (plane - a.y) / (b.y - a.y);
        let p = a + (b - a) * t;
        Some(
            ((p.x - layout::HOLE_CENTER_XZ[0]).powi(2) + (p.z - layout::HOLE_CENTER_XZ[1]).powi(2))
                .sqrt(),
        )
    };
    let mut entered = false;
    for pair in trajectory.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let grasped = cur.holders(NEEDLE).next().is_some() && prev.holders(NEEDLE).next().is_some();
        let (Some(a), Some(b)) = (tip(prev), tip(cur)) else {
            return false;
        };
        if !grasped {
            entered = false;
            continue;
        }
        if b.y < entry {
            entered = false;
        }
        if let Some(d) = crossing(&a, &b, entry) {
            entered = d <= r;
        }
        if entered {
            if let Some(d) = crossing(&a, &b, exit) {
                if d <= r {
                    return true;
                }
                entered = false;
            }
        }
    }
    false
}

fn block_on_goal(spec: &TaskSpec, s: &SceneState) -> bool {
    let Some(pose) = s.objects.get(&BLOCK) else {
        return false;
    };
    let [x, y, z] = pose.position;
    let dx = x - layout::GOAL_PEG[0];
    let dy = y - layout::GOAL_PEG[1];
    let rest = s.props.rest_height(BLOCK, x, y);
    s.holders(BLOCK).next().is_none()
        && (dx * dx + dy * dy).sqrt() <= spec.success.peg_tolerance
        && z < layout::PEG_HEIGHT
        && (z - rest).abs() <= 1e-9
}
