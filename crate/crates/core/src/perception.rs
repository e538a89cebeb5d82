//! Observation construction: RGB stacks and segmented, farthest-point-sampled clouds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CameraRig};
use crate::error::{Error, Result};
use crate::layout::{self, ObjectId};
use crate::render::{render_geometry, FrameSet, RenderScene};
use crate::sim::{get_proprio, SceneState};
use crate::task::TaskName;

pub const DEFAULT_CLOUD_POINTS: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFrame {
    #[default]
    Camera,
    World,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub frame: CloudFrame,
    /// Instance ids of the pixels the points came from.
    pub source_ids: BTreeSet<i32>,
    /// Set when fewer distinct points than requested were available.
    pub padded: bool,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.points.iter().flatten().map(|c| *c as f32).collect()
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame: self.frame,
            source_ids: self.source_ids.clone(),
            padded: self.padded,
        }
    }

    pub fn to_world(&self, camera: &CameraModel) -> PointCloud {
        if self.frame == CloudFrame::World {
            return self.clone();
        }
        let points = self
            .points
            .iter()
            .map(|p| camera.camera_to_world(&(*p).into()).into())
            .collect();
        PointCloud {
            points,
            frame: CloudFrame::World,
            ..self.clone()
        }
    }
}

/// Per-pixel selection over a `width x height` frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn all(width: u32, height: u32) -> Self {
        Self::from_fn(width, height, |_, _| true)
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity((width * height) as usize);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v * self.width + u) as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Back-project masked pixels with positive depth into the camera frame.
pub fn deproject(frame: &FrameSet, camera: &CameraModel, mask: &PixelMask) -> Result<PointCloud> {
    if mask.width != frame.width || mask.height != frame.height {
        return Err(Error::InvalidArgument(format!(
            "mask {}x{} does not match frame {}x{}",
            mask.width, mask.height, frame.width, frame.height
        )));
    }
    if frame.width != camera.width || frame.height != camera.height {
        return Err(Error::InvalidArgument(format!(
            "frame {}x{} does not match camera {} at {}x{}",
            frame.width, frame.height, camera.id, camera.width, camera.height
        )));
    }
    let mut points = Vec::new();
    let mut source_ids = BTreeSet::new();
    for v in 0..frame.height {
        for u in 0..frame.width {
            let i = frame.index(u, v);
            let z = f64::from(frame.depth[i]);
            if !mask.get(u, v) || z <= 0.0 {
                continue;
            }
            let x = (f64::from(u) - camera.cx) / camera.fx * z;
            let y = (f64::from(v) - camera.cy) / camera.fy * z;
            points.push([x, y, z]);
            source_ids.insert(frame.seg[i]);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        frame: CloudFrame::Camera,
        source_ids,
        padded: false,
    })
}

/// Mask that is true exactly where the segmentation id is in `ids`.
pub fn crop_by_segmentation(frame: &FrameSet, ids: &BTreeSet<ObjectId>) -> Result<PixelMask> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("crop needs at least one id".into()));
    }
    let raw: BTreeSet<i32> = ids.iter().map(|i| i.0).collect();
    Ok(PixelMask::from_fn(frame.width, frame.height, |u, v| {
        raw.contains(&frame.seg[frame.index(u, v)])
    }))
}

/// Arms plus the task's target object(s).
pub fn default_crop_ids(task: TaskName, num_arms: usize) -> BTreeSet<ObjectId> {
    let mut ids: BTreeSet<ObjectId> = (0..num_arms).map(layout::arm_id).collect();
    ids.insert(match task {
        TaskName::TissueRetraction => layout::TISSUE,
        TaskName::BlockTransfer => layout::BLOCK,
        TaskName::NeedleLift | TaskName::NeedleHandover | TaskName::SuturePad => layout::NEEDLE,
    });
    ids
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FpsResult {
    pub indices: Vec<usize>,
    pub padded: bool,
}

/// Greedy farthest point sampling seeded at index 0; ties go to the lowest index.
/// Requests beyond the number of points repeat the last selected index.
pub fn farthest_point_sample(points: &[[f64; 3]], n: usize) -> Result<FpsResult> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    let m = points.len();
    let take = n.min(m);
    let mut indices = Vec::with_capacity(n);
    let mut selected = vec![false; m];
    let mut min_d = vec![f64::INFINITY; m];
    let mut current = 0;
    for _ in 0..take {
        indices.push(current);
        selected[current] = true;
        let c = points[current];
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            if selected[j] {
                continue;
            }
            let d = sq_dist(&points[j], &c);
            if d < min_d[j] {
                min_d[j] = d;
            }
            if best.is_none_or(|(_, bd)| min_d[j] > bd) {
                best = Some((j, min_d[j]));
            }
        }
        match best {
            Some((j, _)) => current = j,
            None => break,
        }
    }
    let padded = n > m;
    let last = *indices.last().expect("at least one index");
    indices.resize(n, last);
    Ok(FpsResult { indices, padded })
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSpace {
    SingleCamera,
    MultiCamera,
    PointCloud,
}

impl ObservationSpace {
    pub const ALL: [ObservationSpace; 3] = [
        ObservationSpace::SingleCamera,
        ObservationSpace::MultiCamera,
        ObservationSpace::PointCloud,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObservationSpace::SingleCamera => "single_camera",
            ObservationSpace::MultiCamera => "multi_camera",
            ObservationSpace::PointCloud => "point_cloud",
        }
    }
}

impl fmt::Display for ObservationSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObservationSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown observation space '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl From<&FrameSet> for RgbImage {
    fn from(f: &FrameSet) -> Self {
        RgbImage {
            width: f.width,
            height: f.height,
            data: f.rgb.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub num_points: usize,
    pub frame: CloudFrame,
    /// Segmentation ids kept in the cloud; task defaults when absent.
    pub crop_ids: Option<BTreeSet<ObjectId>>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            num_points: DEFAULT_CLOUD_POINTS,
            frame: CloudFrame::Camera,
            crop_ids: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Camera id to RGB image, in rig order under sorted keys.
    pub images: BTreeMap<String, RgbImage>,
    pub cloud: Option<PointCloud>,
    pub proprio: Vec<f64>,
}

/// Cloud from the primary camera's depth, cropped and downsampled.
pub fn sample_cloud(
    frame: &FrameSet,
    camera: &CameraModel,
    ids: &BTreeSet<ObjectId>,
    config: &PerceptionConfig,
) -> Result<PointCloud> {
    let mask = crop_by_segmentation(frame, ids)?;
    let dense = deproject(frame, camera, &mask)?;
    let fps = farthest_point_sample(&dense.points, config.num_points)?;
    let mut cloud = dense.select(&fps.indices);
    cloud.padded = fps.padded;
    Ok(match config.frame {
        CloudFrame::Camera => cloud,
        CloudFrame::World => cloud.to_world(camera),
    })
}

pub fn build_observation(
    scene: &SceneState,
    rig: &CameraRig,
    space: ObservationSpace,
    config: &PerceptionConfig,
) -> Result<Observation> {
    let geometry = RenderScene::from_scene(scene);
    let mut images = BTreeMap::new();
    let mut cloud = None;
    match space {
        ObservationSpace::SingleCamera => {
            let f = render_geometry(&geometry, &rig.primary);
            images.insert(rig.primary.id.clone(), RgbImage::from(&f));
        }
        ObservationSpace::MultiCamera => {
            if rig.wrist.is_empty() {
                return Err(Error::config(
                    "multi_camera space needs at least one wrist camera",
                ));
            }
            for cam in rig.cameras(scene)? {
                let f = render_geometry(&geometry, &cam);
                images.insert(cam.id.clone(), RgbImage::from(&f));
            }
        }
        ObservationSpace::PointCloud => {
            let f = render_geometry(&geometry, &rig.primary);
            let ids = config
                .crop_ids
                .clone()
                .unwrap_or_else(|| default_crop_ids(scene.task(), scene.num_arms()));
            cloud = Some(sample_cloud(&f, &rig.primary, &ids, config)?);
        }
    }
    Ok(Observation {
        images,
        cloud,
        proprio: get_proprio(scene),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn tiny_camera(w: u32, h: u32, f: f64, cx: f64, cy: f64) -> CameraModel {
        CameraModel {
            id: "t".into(),
            fx: f,
            fy: f,
            cx,
            cy,
            width: w,
            height: h,
            pose: Pose::IDENTITY,
        }
    }

    fn flat_frame(w: u32, h: u32, depth: f32) -> FrameSet {
        let n = (w * h) as usize;
        FrameSet {
            width: w,
            height: h,
            rgb: vec![0; n * 3],
            depth: vec![depth; n],
            seg: vec![7; n],
        }
    }

    #[test]
    fn principal_point_maps_to_axis() {
        let cam = tiny_camera(5, 5, 3.0, 2.0, 2.0);
        let frame = flat_frame(5, 5, 1.0);
        let mask = PixelMask::from_fn(5, 5, |u, v| u == 2 && v == 2);
        let cloud = deproject(&frame, &cam, &mask).unwrap();
        assert_eq!(cloud.points, vec![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn formula_evaluation() {
        let cam = tiny_camera(8, 8, 2.0, 1.0, 1.0);
        let frame = flat_frame(8, 8, 2.0);
        let mask = PixelMask::from_fn(8, 8, |u, v| u == 3 && v == 4);
        let cloud = deproject(&frame, &cam, &mask).unwrap();
        assert_eq!(cloud.points, vec![[2.0, 3.0, 2.0]]);
    }

    #[test]
    fn zero_depth_gives_empty_cloud_error() {
        let cam = tiny_camera(4, 4, 2.0, 2.0, 2.0);
        let frame = flat_frame(4, 4, 0.0);
        assert!(matches!(
            deproject(&frame, &cam, &PixelMask::all(4, 4)),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn fps_square_corners() {
        let pts = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ];
        let r = farthest_point_sample(&pts, 2).unwrap();
        assert_eq!(r.indices, vec![0, 2]);
        assert_eq!(farthest_point_sample(&pts, 1).unwrap().indices, vec![0]);
        let mut all = farthest_point_sample(&pts, 4).unwrap().indices;
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fps_pads_and_flags() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0]];
        let r = farthest_point_sample(&pts, 4).unwrap();
        assert_eq!(r.indices, vec![0, 1, 1, 1]);
        assert!(r.padded);
        assert!(!farthest_point_sample(&pts, 2).unwrap().padded);
    }

    #[test]
    fn fps_duplicates_stay_distinct() {
        let pts = [[0.0; 3]; 3];
        assert_eq!(
            farthest_point_sample(&pts, 3).unwrap().indices,
            vec![0, 1, 2]
        );
    }

    #[test]
    fn observation_space_names_round_trip() {
        for s in ObservationSpace::ALL {
            assert_eq!(s.as_str().parse::<ObservationSpace>().unwrap(), s);
        }
        assert!("rgbd".parse::<ObservationSpace>().is_err());
    }
}
