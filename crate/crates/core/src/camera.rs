//! Pinhole cameras and per-task camera rigs.
//!
//! Camera frames follow the computer-vision convention: +x right, +y down,
//! +z along the optical axis. `pose` maps camera coordinates to world.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at, Pose};
use crate::sim::SceneState;
use crate::task::{TaskName, TaskSpec};

pub const DEFAULT_RESOLUTION: u32 = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: Pose,
}

impl CameraModel {
    /// Square-pixel camera with horizontal field of view `hfov` (radians).
    pub fn from_fov(id: &str, width: u32, height: u32, hfov: f64, pose: Pose) -> Self {
        let f = (width as f64 / 2.0) / (hfov / 2.0).tan();
        CameraModel {
            id: id.to_string(),
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            pose,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::config(format!(
                "camera {}: focal lengths must be positive",
                self.id
            )));
        }
        if !(self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64)
        {
            return Err(Error::config(format!(
                "camera {}: principal point outside the image",
                self.id
            )));
        }
        if !self.pose.is_finite() {
            return Err(Error::config(format!(
                "camera {}: non-finite pose",
                self.id
            )));
        }
        Ok(())
    }

    /// Same camera rendered at another resolution (intrinsics rescaled).
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraModel {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }

    /// Ray direction in the camera frame for pixel `(u, v)`, scaled so that z = 1.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point (z > 0).
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.inverse_transform_point(p)
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.transform_point(p)
    }
}

/// Camera rigidly mounted on an arm's end-effector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WristMount {
    pub arm: usize,
    /// Intrinsics plus the camera pose expressed in the gripper frame.
    pub camera: CameraModel,
}

impl WristMount {
    pub fn camera_in_world(&self, ee: &Pose) -> CameraModel {
        CameraModel {
            pose: ee.compose(&self.camera.pose),
            ..self.camera.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub primary: CameraModel,
    /// The other static viewpoint, used when views are swapped.
    pub alternate: Option<CameraModel>,
    pub wrist: Vec<WristMount>,
}

impl CameraRig {
    pub fn wrist_camera(&self, index: usize, scene: &SceneState) -> Result<CameraModel> {
        let mount = self
            .wrist
            .get(index)
            .ok_or_else(|| Error::config(format!("rig has no wrist camera {index}")))?;
        let arm = scene.arms.get(mount.arm).ok_or_else(|| {
            Error::config(format!(
                "wrist camera {} mounted on missing arm {}",
                mount.camera.id, mount.arm
            ))
        })?;
        Ok(mount.camera_in_world(&arm.ee_pose))
    }

    /// Primary camera followed by every wrist camera, posed for `scene`.
    pub fn cameras(&self, scene: &SceneState) -> Result<Vec<CameraModel>> {
        let mut out = vec![self.primary.clone()];
        for i in 0..self.wrist.len() {
            out.push(self.wrist_camera(i, scene)?);
        }
        Ok(out)
    }

    pub fn with_resolution(&self, size: u32) -> Self {
        CameraRig {
            primary: self.primary.with_resolution(size, size),
            alternate: self
                .alternate
                .as_ref()
                .map(|c| c.with_resolution(size, size)),
            wrist: self
                .wrist
                .iter()
                .map(|m| WristMount {
                    arm: m.arm,
                    camera: m.camera.with_resolution(size, size),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

fn endoscope(size: u32) -> CameraModel {
    let pose = look_at(Vector3::new(0.0, 0.0, 0.14), Vector3::zeros(), Vector3::y());
    CameraModel::from_fov("endoscope", size, size, 39.3f64.to_radians(), pose)
}

fn side_view(size: u32) -> CameraModel {
    let pose = look_at(
        Vector3::new(0.0, -0.16, 0.10),
        Vector3::new(0.0, 0.005, 0.015),
        Vector3::z(),
    );
    CameraModel::from_fov("side", size, size, 45f64.to_radians(), pose)
}

fn wrist_mount(arm: usize, size: u32) -> WristMount {
    // Tool frame: +z along the jaws. The camera sits 3 cm up the shaft, offset
    // sideways, and looks at a point just past the jaw tips.
    let pose = look_at(
        Vector3::new(0.0, -0.012, -0.03),
        Vector3::new(0.0, 0.0, 0.005),
        Vector3::new(0.0, 1.0, 0.0),
    );
    WristMount {
        arm,
        camera: CameraModel::from_fov(
            &format!("wrist_{arm}"),
            size,
            size,
            60f64.to_radians(),
            pose,
        ),
    }
}

fn static_camera(id: &str, size: u32) -> Result<CameraModel> {
    match id {
        "endoscope" => Ok(endoscope(size)),
        "side" => Ok(side_view(size)),
        other => Err(Error::config(format!("unknown static camera `{other}`"))),
    }
}

/// Rig for a task: primary per the task config, the other static view as
/// alternate, and one wrist camera per arm.
pub fn default_rig(spec: &TaskSpec) -> Result<CameraRig> {
    rig_at_resolution(spec, DEFAULT_RESOLUTION)
}

pub fn rig_at_resolution(spec: &TaskSpec, size: u32) -> Result<CameraRig> {
    let primary = static_camera(&spec.primary_camera, size)?;
    let alternate = Some(static_camera(&spec.alternate_camera, size)?);
    let wrist = (0..spec.num_arms)
        .map(|arm| wrist_mount(arm, size))
        .collect();
    Ok(CameraRig {
        primary,
        alternate,
        wrist,
    })
}

/// Primary camera id each task uses.
pub fn primary_view(task: TaskName) -> &'static str {
    match task {
        TaskName::SuturePad | TaskName::BlockTransfer => "side",
        _ => "endoscope",
    }
}

/// Per-axis bounds on viewpoint perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbBounds {
    pub translation: f64,
    pub rotation_deg: f64,
}

impl Default for PerturbBounds {
    fn default() -> Self {
        PerturbBounds {
            translation: 0.01,
            rotation_deg: 5.0,
        }
    }
}

/// Offsets actually applied to a camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// World-frame translation in meters.
    pub translation: [f64; 3],
    /// Rotation about the camera's own x, y, z axes, in degrees.
    pub rotation_deg: [f64; 3],
}

impl Perturbation {
    pub fn within(&self, bounds: &PerturbBounds) -> bool {
        self.translation
            .iter()
            .all(|t| t.abs() <= bounds.translation)
            && self
                .rotation_deg
                .iter()
                .all(|r| r.abs() <= bounds.rotation_deg)
    }
}

/// Shift and tilt `camera` by offsets drawn uniformly within `bounds`; intrinsics unchanged.
pub fn perturb_camera(
    camera: &CameraModel,
    seed: u64,
    bounds: &PerturbBounds,
) -> (CameraModel, Perturbation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let translation = [
        draw(bounds.translation),
        draw(bounds.translation),
        draw(bounds.translation),
    ];
    let rotation_deg = [
        draw(bounds.rotation_deg),
        draw(bounds.rotation_deg),
        draw(bounds.rotation_deg),
    ];
    let perturbation = Perturbation {
        translation,
        rotation_deg,
    };
    if translation == [0.0; 3] && rotation_deg == [0.0; 3] {
        return (camera.clone(), perturbation);
    }
    let [rx, ry, rz] = rotation_deg.map(f64::to_radians);
    let tilt = UnitQuaternion::from_euler_angles(rx, ry, rz);
    let rot = camera.pose.rotation() * tilt;
    let pos = camera.pose.translation() + Vector3::from(translation);
    let out = CameraModel {
        pose: Pose::new(pos, UnitQuaternion::new_normalize(rot.into_inner())),
        ..camera.clone()
    };
    (out, perturbation)
}

/// Exchange the primary and alternate static views. Wrist cameras are untouched.
pub fn swap_view(rig: &CameraRig) -> Result<CameraRig> {
    let alternate = rig
        .alternate
        .clone()
        .ok_or_else(|| Error::config("rig has no alternate view to swap in"))?;
    Ok(CameraRig {
        primary: alternate,
        alternate: Some(rig.primary.clone()),
        wrist: rig.wrist.clone(),
    })
}
