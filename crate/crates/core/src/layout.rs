//! Fixed scene geometry for each task: static bodies, arm home poses and the
//! nominal placements that randomization offsets are applied to.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::task::TaskName;

/// Instance id used in segmentation images and object maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub i32);

impl std::fmt::Display for ObjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const NEEDLE: ObjectId = ObjectId(1);
pub const TISSUE: ObjectId = ObjectId(2);
pub const BLOCK: ObjectId = ObjectId(3);
pub const SURFACE: ObjectId = ObjectId(10);
pub const SUTURE_PAD: ObjectId = ObjectId(11);
pub const SUTURE_WALL: ObjectId = ObjectId(12);
pub const PEG_BASE: i32 = 20;
pub const ARM_BASE: i32 = 100;

pub fn arm_id(arm: usize) -> ObjectId {
    ObjectId(ARM_BASE + arm as i32)
}

pub fn peg_id(peg: usize) -> ObjectId {
    ObjectId(PEG_BASE + peg as i32)
}

/// Right arm (first arm) in the dual-arm setup.
pub const RIGHT_ARM: usize = 0;
pub const LEFT_ARM: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Oriented box; `half` extents in the pose frame.
    Box {
        pose: Pose,
        half: [f64; 3],
    },
    /// Capped cylinder along the pose's local +z, base at the pose origin.
    Cylinder {
        pose: Pose,
        radius: f64,
        height: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: ObjectId,
    pub shape: Shape,
    pub color: [u8; 3],
}

pub mod colors {
    pub const LIVER: [u8; 3] = [120, 40, 35];
    pub const MUSCLE: [u8; 3] = [150, 55, 50];
    pub const BOARD: [u8; 3] = [90, 90, 95];
    pub const NEEDLE: [u8; 3] = [235, 235, 225];
    pub const TISSUE: [u8; 3] = [225, 175, 150];
    pub const MARKER: [u8; 3] = [230, 20, 20];
    pub const PAD: [u8; 3] = [210, 200, 170];
    pub const HOLE: [u8; 3] = [25, 20, 20];
    pub const PEG: [u8; 3] = [200, 200, 200];
    pub const GOAL_PEG: [u8; 3] = [245, 105, 180];
    pub const BLOCK: [u8; 3] = [60, 160, 220];
    pub const SHAFT: [u8; 3] = [70, 70, 75];
    pub const JAW: [u8; 3] = [150, 150, 160];
}

pub const TISSUE_HALF: [f64; 3] = [0.045, 0.02, 0.0015];
/// Grasp strip along the front tissue edge, in the tissue frame (origin on the top face center).
pub const TISSUE_EDGE_Y: f64 = -0.017;
pub const TISSUE_FEATURE_SPACING: f64 = 0.002;
pub const BLOCK_HALF: [f64; 3] = [0.006, 0.006, 0.004];
pub const PEG_RADIUS: f64 = 0.002;
pub const PEG_HEIGHT: f64 = 0.025;
pub const PAD_TOP: f64 = 0.01;
pub const PAD_MIN: [f64; 2] = [-0.045, -0.03];
pub const PAD_MAX: [f64; 2] = [0.045, 0.01];
pub const WALL_Y: [f64; 2] = [0.023, 0.027];
/// Hole axis runs along +y through the wall at this (x, z).
pub const HOLE_CENTER_XZ: [f64; 2] = [0.0, 0.03];
pub const START_PEGS: [[f64; 2]; 6] = [
    [-0.03, -0.02],
    [0.0, -0.02],
    [0.03, -0.02],
    [-0.03, 0.0],
    [0.0, 0.0],
    [0.03, 0.0],
];
pub const GOAL_PEG: [f64; 2] = [0.0, 0.03];

/// Tool frame with the jaws pointing straight down (tool +z = world -z).
pub fn tool_down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

pub fn arm_home(task: TaskName, arm: usize) -> Pose {
    let p = match (task, arm) {
        (TaskName::NeedleHandover, RIGHT_ARM) => Vector3::new(0.04, 0.0, 0.05),
        (TaskName::NeedleHandover, _) => Vector3::new(-0.04, 0.0, 0.05),
        _ => Vector3::new(0.0, 0.0, 0.05),
    };
    Pose::new(p, tool_down())
}

/// Nominal needle placement before randomization (position of the arc midpoint, yaw).
pub fn needle_nominal(task: TaskName) -> (Vector3<f64>, f64) {
    match task {
        TaskName::NeedleHandover => (Vector3::zeros(), -PI / 2.0),
        TaskName::SuturePad => (Vector3::new(0.0, -0.012, PAD_TOP), 0.0),
        _ => (Vector3::zeros(), 0.0),
    }
}

pub fn needle_handover_point() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, 0.04)
}

/// Height of the supporting surface under `(x, y)`.
pub fn support_height(task: TaskName, x: f64, y: f64) -> f64 {
    if task == TaskName::SuturePad
        && (PAD_MIN[0]..=PAD_MAX[0]).contains(&x)
        && (PAD_MIN[1]..=PAD_MAX[1]).contains(&y)
    {
        PAD_TOP
    } else {
        0.0
    }
}

pub fn surface_color(task: TaskName) -> [u8; 3] {
    match task {
        TaskName::NeedleLift => colors::MUSCLE,
        TaskName::TissueRetraction | TaskName::NeedleHandover => colors::LIVER,
        TaskName::SuturePad | TaskName::BlockTransfer => colors::BOARD,
    }
}

/// Static bodies (never move, never graspable).
pub fn static_bodies(task: TaskName) -> Vec<Body> {
    let mut out = vec![Body {
        id: SURFACE,
        shape: Shape::Box {
            pose: Pose::from_translation(Vector3::new(0.0, 0.0, -0.005)),
            half: [0.15, 0.15, 0.005],
        },
        color: surface_color(task),
    }];
    match task {
        TaskName::SuturePad => {
            let cx = 0.5 * (PAD_MIN[0] + PAD_MAX[0]);
            let cy = 0.5 * (PAD_MIN[1] + PAD_MAX[1]);
            out.push(Body {
                id: SUTURE_PAD,
                shape: Shape::Box {
                    pose: Pose::from_translation(Vector3::new(cx, cy, PAD_TOP / 2.0)),
                    half: [
                        0.5 * (PAD_MAX[0] - PAD_MIN[0]),
                        0.5 * (PAD_MAX[1] - PAD_MIN[1]),
                        PAD_TOP / 2.0,
                    ],
                },
                color: colors::PAD,
            });
            let wall_h = 0.045;
            out.push(Body {
                id: SUTURE_WALL,
                shape: Shape::Box {
                    pose: Pose::from_translation(Vector3::new(
                        0.0,
                        0.5 * (WALL_Y[0] + WALL_Y[1]),
                        wall_h / 2.0,
                    )),
                    half: [0.03, 0.5 * (WALL_Y[1] - WALL_Y[0]), wall_h / 2.0],
                },
                color: colors::PAD,
            });
            // Dark plug marking the hole on both wall faces.
            let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -PI / 2.0);
            out.push(Body {
                id: SUTURE_WALL,
                shape: Shape::Cylinder {
                    pose: Pose::new(
                        Vector3::new(HOLE_CENTER_XZ[0], WALL_Y[0] - 0.0002, HOLE_CENTER_XZ[1]),
                        rot,
                    ),
                    radius: 0.003,
                    height: WALL_Y[1] - WALL_Y[0] + 0.0004,
                },
                color: colors::HOLE,
            });
        }
        TaskName::BlockTransfer => {
            for (i, p) in START_PEGS
                .iter()
                .chain(std::iter::once(&GOAL_PEG))
                .enumerate()
            {
                let goal = i == START_PEGS.len();
                out.push(Body {
                    id: peg_id(i),
                    shape: Shape::Cylinder {
                        pose: Pose::from_translation(Vector3::new(p[0], p[1], 0.0)),
                        radius: PEG_RADIUS,
                        height: PEG_HEIGHT,
                    },
                    color: if goal { colors::GOAL_PEG } else { colors::PEG },
                });
            }
        }
        _ => {}
    }
    out
}

/// Graspable features of the tissue flap, in its local frame.
pub fn tissue_features() -> Vec<[f64; 3]> {
    let n = (2.0 * TISSUE_HALF[0] / TISSUE_FEATURE_SPACING).round() as usize;
    (0..=n)
        .map(|i| {
            [
                -TISSUE_HALF[0] + i as f64 * TISSUE_FEATURE_SPACING,
                TISSUE_EDGE_Y,
                0.0,
            ]
        })
        .collect()
}

/// Graspable features on the block's top rim, in its local frame.
pub fn block_features() -> Vec<[f64; 3]> {
    let r = 0.75 * BLOCK_HALF[0];
    let z = BLOCK_HALF[2];
    vec![[r, 0.0, z], [-r, 0.0, z], [0.0, r, z], [0.0, -r, z]]
}
