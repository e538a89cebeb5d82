//! On-disk demonstration sets.
//!
//! Layout under a dataset root:
//!
//! ```text
//! manifest.toml
//! episode_0000/
//!     meta.toml
//!     actions.f32        steps x action_dim
//!     proprio.f32        steps x proprio_dim (state each action was taken from)
//!     rgb_<cam>.u8       steps x H x W x 3
//!     depth_<cam>.f32    steps x H x W
//!     seg_<cam>.i32      steps x H x W
//!     cloud.f32          steps x N x 3
//! ```
//!
//! Which observation arrays exist depends on the capture's observation space.
//! Episodes are written to a hidden temporary directory and renamed into place,
//! so a crash never leaves a half-written `episode_NNNN`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::{CameraModel, CameraRig};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::perception::{
    default_crop_ids, sample_cloud, Observation, ObservationSpace, PerceptionConfig, PointCloud,
    RgbImage,
};
use crate::rawarray::RawArray;
use crate::render::{render_geometry, FrameSet, RenderScene};
use crate::sim::{
    get_proprio, reset_task, Action, SceneState, ACTION_DIM_PER_ARM, PROPRIO_DIM_PER_ARM,
};
use crate::success::check_success;
use crate::task::{TaskName, TaskSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const META_FILE: &str = "meta.toml";
/// Largest final-state difference a replay may show and still count as valid.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Scripted,
    Teleop,
}

/// What images, if any, are rendered and stored alongside actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    pub space: ObservationSpace,
    pub rig: CameraRig,
    #[serde(default)]
    pub perception: PerceptionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub id: i32,
    pub pose: Pose,
}

/// Exact end state of an episode, kept at full precision for replay checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub step_count: u32,
    pub proprio: Vec<f64>,
    pub objects: Vec<ObjectPose>,
}

impl FinalState {
    pub fn of(state: &SceneState) -> Self {
        FinalState {
            step_count: state.step_count,
            proprio: get_proprio(state),
            objects: state
                .objects
                .iter()
                .map(|(id, pose)| ObjectPose {
                    id: id.0,
                    pose: *pose,
                })
                .collect(),
        }
    }

    /// Largest absolute component difference; infinite when the layouts differ.
    pub fn deviation(&self, other: &FinalState) -> f64 {
        if self.step_count != other.step_count
            || self.proprio.len() != other.proprio.len()
            || self.objects.len() != other.objects.len()
        {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for (a, b) in self.proprio.iter().zip(&other.proprio) {
            dev = dev.max((a - b).abs());
        }
        for (a, b) in self.objects.iter().zip(&other.objects) {
            if a.id != b.id {
                return f64::INFINITY;
            }
            let pa = a.pose.position.iter().chain(&a.pose.orientation);
            let pb = b.pose.position.iter().chain(&b.pose.orientation);
            for (x, y) in pa.zip(pb) {
                dev = dev.max((x - y).abs());
            }
        }
        if dev.is_nan() {
            f64::INFINITY
        } else {
            dev
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub format_version: u32,
    pub task: TaskName,
    pub seed: u64,
    pub source: Source,
    pub success: bool,
    pub steps: usize,
    pub num_arms: usize,
    pub spec: TaskSpec,
    pub capture: Option<Capture>,
    pub final_state: FinalState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub actions: RawArray,
    pub proprio: RawArray,
    /// Observation arrays keyed by file name, e.g. `rgb_side.u8`.
    pub observations: BTreeMap<String, RawArray>,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.meta.steps
    }

    pub fn action_dim(&self) -> usize {
        self.meta.num_arms * ACTION_DIM_PER_ARM
    }

    pub fn action_rows(&self) -> Result<Vec<Vec<f32>>> {
        let flat = self.actions.to_f32()?;
        Ok(flat
            .chunks(self.action_dim())
            .map(<[f32]>::to_vec)
            .collect())
    }

    pub fn proprio_rows(&self) -> Result<Vec<Vec<f32>>> {
        let flat = self.proprio.to_f32()?;
        let p = self.meta.num_arms * PROPRIO_DIM_PER_ARM;
        Ok(flat.chunks(p).map(<[f32]>::to_vec).collect())
    }

    /// Actions as the simulator consumes them.
    pub fn sim_actions(&self) -> Result<Vec<Action>> {
        self.action_rows()?
            .iter()
            .map(|r| Action::from_slice(&r.iter().map(|v| f64::from(*v)).collect::<Vec<_>>()))
            .collect()
    }

    /// Observation the policy saw before taking action `t`.
    pub fn observation(&self, t: usize) -> Result<Observation> {
        if t >= self.meta.steps {
            return Err(Error::InvalidArgument(format!(
                "step {t} out of range for {} steps",
                self.meta.steps
            )));
        }
        let mut images = BTreeMap::new();
        let mut cloud = None;
        for (name, arr) in &self.observations {
            if let Some(cam) = name
                .strip_prefix("rgb_")
                .and_then(|n| n.strip_suffix(".u8"))
            {
                images.insert(
                    cam.to_string(),
                    RgbImage {
                        width: arr.dims[2] as u32,
                        height: arr.dims[1] as u32,
                        data: arr.slice_bytes(t).to_vec(),
                    },
                );
            } else if name == "cloud.f32" {
                let bytes = arr.slice_bytes(t);
                let points = bytes
                    .chunks_exact(12)
                    .map(|c| {
                        let f = |k: usize| {
                            f64::from(f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]))
                        };
                        [f(0), f(4), f(8)]
                    })
                    .collect();
                let frame = self
                    .meta
                    .capture
                    .as_ref()
                    .map(|c| c.perception.frame)
                    .unwrap_or_default();
                cloud = Some(PointCloud {
                    points,
                    frame,
                    source_ids: Default::default(),
                    padded: false,
                });
            }
        }
        let space = self.meta.capture.as_ref().map(|c| c.space);
        if space == Some(ObservationSpace::SingleCamera) && images.len() != 1 {
            return Err(Error::InvalidArgument(
                "single-camera episode must hold one image stream".into(),
            ));
        }
        let proprio = self.proprio_rows()?[t]
            .iter()
            .map(|v| f64::from(*v))
            .collect();
        Ok(Observation {
            images,
            cloud,
            proprio,
        })
    }
}

enum Buffer {
    U8(Vec<usize>, Vec<u8>),
    I32(Vec<usize>, Vec<i32>),
    F32(Vec<usize>, Vec<f32>),
}

/// Accumulates one episode step by step. The action returned by [`record`]
/// is the one that must be passed to `SceneState::step`, so the stored
/// `f32` values replay exactly.
///
/// [`record`]: EpisodeRecorder::record
pub struct EpisodeRecorder {
    spec: TaskSpec,
    seed: u64,
    source: Source,
    capture: Option<Capture>,
    num_arms: usize,
    actions: Vec<f32>,
    proprio: Vec<f32>,
    buffers: BTreeMap<String, Buffer>,
    steps: usize,
}

impl EpisodeRecorder {
    pub fn new(spec: &TaskSpec, seed: u64, source: Source, capture: Option<Capture>) -> Self {
        Self {
            spec: spec.clone(),
            seed,
            source,
            capture,
            num_arms: spec.num_arms,
            actions: Vec::new(),
            proprio: Vec::new(),
            buffers: BTreeMap::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn record(&mut self, state: &SceneState, action: &Action) -> Result<Action> {
        if action.arms.len() != self.num_arms {
            return Err(Error::InvalidArgument(format!(
                "action for {} arms recorded on a {}-arm task",
                action.arms.len(),
                self.num_arms
            )));
        }
        let stored = action.clamped(&state.props.sim).quantized();
        self.actions
            .extend(stored.to_vec().iter().map(|v| *v as f32));
        self.proprio
            .extend(get_proprio(state).iter().map(|v| *v as f32));
        if let Some(capture) = self.capture.clone() {
            self.capture_step(state, &capture)?;
        }
        self.steps += 1;
        Ok(stored)
    }

    fn push_frame(&mut self, cam: &CameraModel, f: &FrameSet, rgb: bool, depth_seg: bool) {
        let (h, w) = (f.height as usize, f.width as usize);
        if rgb {
            let e = self
                .buffers
                .entry(format!("rgb_{}.u8", cam.id))
                .or_insert_with(|| Buffer::U8(vec![h, w, 3], Vec::new()));
            if let Buffer::U8(_, v) = e {
                v.extend_from_slice(&f.rgb);
            }
        }
        if depth_seg {
            let e = self
                .buffers
                .entry(format!("depth_{}.f32", cam.id))
                .or_insert_with(|| Buffer::F32(vec![h, w], Vec::new()));
            if let Buffer::F32(_, v) = e {
                v.extend_from_slice(&f.depth);
            }
            let e = self
                .buffers
                .entry(format!("seg_{}.i32", cam.id))
                .or_insert_with(|| Buffer::I32(vec![h, w], Vec::new()));
            if let Buffer::I32(_, v) = e {
                v.extend_from_slice(&f.seg);
            }
        }
    }

    fn capture_step(&mut self, state: &SceneState, capture: &Capture) -> Result<()> {
        let geometry = RenderScene::from_scene(state);
        let primary = &capture.rig.primary;
        match capture.space {
            ObservationSpace::SingleCamera => {
                let f = render_geometry(&geometry, primary);
                self.push_frame(primary, &f, true, false);
            }
            ObservationSpace::MultiCamera => {
                if capture.rig.wrist.is_empty() {
                    return Err(Error::config("multi_camera capture needs a wrist camera"));
                }
                for cam in capture.rig.cameras(state)? {
                    let f = render_geometry(&geometry, &cam);
                    self.push_frame(&cam, &f, true, false);
                }
            }
            ObservationSpace::PointCloud => {
                let f = render_geometry(&geometry, primary);
                self.push_frame(primary, &f, false, true);
                let ids = capture
                    .perception
                    .crop_ids
                    .clone()
                    .unwrap_or_else(|| default_crop_ids(state.task(), state.num_arms()));
                let cloud = sample_cloud(&f, primary, &ids, &capture.perception)?;
                let n = cloud.len();
                let e = self
                    .buffers
                    .entry("cloud.f32".into())
                    .or_insert_with(|| Buffer::F32(vec![n, 3], Vec::new()));
                if let Buffer::F32(_, v) = e {
                    v.extend(cloud.to_f32());
                }
            }
        }
        Ok(())
    }

    pub fn finish(self, final_state: &SceneState, success: bool) -> Result<Episode> {
        let t = self.steps;
        let a = self.num_arms * ACTION_DIM_PER_ARM;
        let p = self.num_arms * PROPRIO_DIM_PER_ARM;
        let mut observations = BTreeMap::new();
        for (name, buf) in self.buffers {
            let arr = match buf {
                Buffer::U8(d, v) => RawArray::from_u8(&lead(t, &d), &v)?,
                Buffer::I32(d, v) => RawArray::from_i32(&lead(t, &d), &v)?,
                Buffer::F32(d, v) => RawArray::from_f32(&lead(t, &d), &v)?,
            };
            observations.insert(name, arr);
        }
        Ok(Episode {
            meta: EpisodeMeta {
                format_version: FORMAT_VERSION,
                task: self.spec.name,
                seed: self.seed,
                source: self.source,
                success,
                steps: t,
                num_arms: self.num_arms,
                spec: self.spec,
                capture: self.capture,
                final_state: FinalState::of(final_state),
            },
            actions: RawArray::from_f32(&[t, a], &self.actions)?,
            proprio: RawArray::from_f32(&[t, p], &self.proprio)?,
            observations,
        })
    }
}

fn lead(t: usize, dims: &[usize]) -> Vec<usize> {
    std::iter::once(t).chain(dims.iter().copied()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    pub success: bool,
    pub source: Source,
    /// SHA-256 over the episode directory, see [`episode_checksum`].
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub task: TaskName,
    pub count: usize,
    pub capture: Option<Capture>,
    pub episodes: Vec<ManifestEntry>,
}

pub fn episode_name(index: usize) -> String {
    format!("episode_{index:04}")
}

/// Hash of every file in `dir`, visited in sorted name order. Each file
/// contributes its name, a zero byte, its length as u64 LE and its bytes.
pub fn episode_checksum(dir: &Path) -> Result<String> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    let mut h = Sha256::new();
    for name in names {
        let bytes = fs::read(dir.join(&name))?;
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Write `episode` as `root/<name>` through a temporary directory and rename.
pub fn write_episode(episode: &Episode, root: &Path, name: &str) -> Result<ManifestEntry> {
    let target = root.join(name);
    if target.exists() {
        return Err(Error::dataset(&target, "episode directory already exists"));
    }
    let tmp = root.join(format!(".tmp-{name}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    fs::write(tmp.join(META_FILE), toml::to_string(&episode.meta)?)?;
    episode.actions.write(&tmp.join("actions.f32"))?;
    episode.proprio.write(&tmp.join("proprio.f32"))?;
    for (file, arr) in &episode.observations {
        arr.write(&tmp.join(file))?;
    }
    let checksum = episode_checksum(&tmp)?;
    fs::rename(&tmp, &target)?;
    Ok(ManifestEntry {
        name: name.to_string(),
        seed: episode.meta.seed,
        steps: episode.meta.steps,
        success: episode.meta.success,
        source: episode.meta.source,
        checksum,
    })
}

pub fn read_episode(dir: &Path) -> Result<Episode> {
    let meta: EpisodeMeta = toml::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::dataset(
            dir,
            format!("unsupported format version {}", meta.format_version),
        ));
    }
    let actions = RawArray::read(&dir.join("actions.f32"))?;
    let proprio = RawArray::read(&dir.join("proprio.f32"))?;
    let mut observations = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.starts_with("rgb_")
            || name.starts_with("depth_")
            || name.starts_with("seg_")
            || name == "cloud.f32"
        {
            observations.insert(name.clone(), RawArray::read(&dir.join(&name))?);
        }
    }
    let a = meta.num_arms * ACTION_DIM_PER_ARM;
    if actions.dims != [meta.steps, a] {
        return Err(Error::dataset(
            dir,
            format!("actions shape {:?}", actions.dims),
        ));
    }
    if proprio.dims != [meta.steps, meta.num_arms * PROPRIO_DIM_PER_ARM] {
        return Err(Error::dataset(
            dir,
            format!("proprio shape {:?}", proprio.dims),
        ));
    }
    for (name, arr) in &observations {
        if arr.dims[0] != meta.steps {
            return Err(Error::dataset(
                dir,
                format!("{name} has {} steps", arr.dims[0]),
            ));
        }
    }
    Ok(Episode {
        meta,
        actions,
        proprio,
        observations,
    })
}

/// A dataset root and its manifest. Subsampled sets are read-only views.
#[derive(Clone, Debug)]
pub struct DemonstrationSet {
    pub root: PathBuf,
    pub manifest: Manifest,
    view: bool,
}

impl DemonstrationSet {
    pub fn create(root: &Path, task: TaskName, capture: Option<Capture>) -> Result<Self> {
        fs::create_dir_all(root)?;
        if root.join(MANIFEST_FILE).exists() {
            return Err(Error::dataset(root, "a dataset already exists here"));
        }
        let set = Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                task,
                count: 0,
                capture,
                episodes: Vec::new(),
            },
            view: false,
        };
        set.save_manifest()?;
        Ok(set)
    }

    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let manifest: Manifest = toml::from_str(&fs::read_to_string(&path)?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::dataset(&path, "unsupported format version"));
        }
        if manifest.count != manifest.episodes.len() {
            return Err(Error::dataset(&path, "count does not match episode list"));
        }
        let mut on_disk = 0;
        for e in fs::read_dir(root)? {
            if e?.file_name().to_string_lossy().starts_with("episode_") {
                on_disk += 1;
            }
        }
        if on_disk != manifest.count {
            return Err(Error::dataset(
                root,
                format!(
                    "{on_disk} episode directories, manifest lists {}",
                    manifest.count
                ),
            ));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            view: false,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.episodes.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.manifest.episodes.iter().map(|e| e.seed).collect()
    }

    fn save_manifest(&self) -> Result<()> {
        let tmp = self.root.join(format!(".{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, toml::to_string(&self.manifest)?)?;
        fs::rename(&tmp, self.root.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn append(&mut self, episode: &Episode) -> Result<ManifestEntry> {
        if self.view {
            return Err(Error::dataset(
                &self.root,
                "cannot append to a subsampled view",
            ));
        }
        if episode.meta.task != self.manifest.task {
            return Err(Error::dataset(
                &self.root,
                format!(
                    "episode task {} in a {} dataset",
                    episode.meta.task, self.manifest.task
                ),
            ));
        }
        let name = episode_name(self.manifest.episodes.len());
        let entry = write_episode(episode, &self.root, &name)?;
        self.manifest.episodes.push(entry.clone());
        self.manifest.count = self.manifest.episodes.len();
        self.save_manifest()?;
        Ok(entry)
    }

    pub fn load(&self, index: usize) -> Result<Episode> {
        let entry = self
            .manifest
            .episodes
            .get(index)
            .ok_or_else(|| Error::dataset(&self.root, format!("no episode {index}")))?;
        read_episode(&self.root.join(&entry.name))
    }

    /// Episodes whose directory hash differs from the manifest.
    pub fn corrupted(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for e in &self.manifest.episodes {
            let dir = self.root.join(&e.name);
            match episode_checksum(&dir) {
                Ok(sum) if sum == e.checksum => {}
                _ => bad.push(e.name.clone()),
            }
        }
        Ok(bad)
    }
}

/// `n` episodes drawn without replacement. The draw is a prefix of one seeded
/// permutation, so smaller draws with the same seed are subsets of larger ones.
pub fn subsample(set: &DemonstrationSet, n: usize, seed: u64) -> Result<DemonstrationSet> {
    let total = set.len();
    if n == 0 || n > total {
        return Err(Error::InvalidArgument(format!(
            "cannot subsample {n} of {total} episodes"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    let mut manifest = set.manifest.clone();
    manifest.episodes = keep
        .iter()
        .map(|&i| set.manifest.episodes[i].clone())
        .collect();
    manifest.count = n;
    Ok(DemonstrationSet {
        root: set.root.clone(),
        manifest,
        view: true,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport {
    pub name: String,
    pub checksum_ok: bool,
    pub deviation: f64,
    pub proprio_match: bool,
    pub stored_success: bool,
    pub replay_success: bool,
    pub error: Option<String>,
}

impl EpisodeReport {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
            && self.checksum_ok
            && self.deviation <= REPLAY_TOLERANCE
            && self.proprio_match
            && self.stored_success == self.replay_success
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub episodes: Vec<EpisodeReport>,
}

impl ValidationReport {
    pub fn max_deviation(&self) -> f64 {
        self.episodes
            .iter()
            .map(|e| e.deviation)
            .fold(0.0, f64::max)
    }

    pub fn invalid(&self) -> Vec<&str> {
        self.episodes
            .iter()
            .filter(|e| !e.is_valid())
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn all_valid(&self) -> bool {
        self.episodes.iter().all(EpisodeReport::is_valid)
    }
}

/// Replay an episode's stored actions from its seed.
pub fn replay_episode(episode: &Episode) -> Result<(Vec<SceneState>, Vec<Vec<f32>>)> {
    let mut state = reset_task(&episode.meta.spec, episode.meta.seed)?;
    let mut proprio = Vec::with_capacity(episode.meta.steps);
    let mut trajectory = vec![state.clone()];
    for action in episode.sim_actions()? {
        proprio.push(get_proprio(&state).iter().map(|v| *v as f32).collect());
        state = state.step(&action)?;
        trajectory.push(state.clone());
    }
    Ok((trajectory, proprio))
}

fn validate_entry(set: &DemonstrationSet, entry: &ManifestEntry) -> EpisodeReport {
    let dir = set.root.join(&entry.name);
    let mut report = EpisodeReport {
        name: entry.name.clone(),
        checksum_ok: episode_checksum(&dir).is_ok_and(|s| s == entry.checksum),
        deviation: f64::INFINITY,
        proprio_match: false,
        stored_success: entry.success,
        replay_success: false,
        error: None,
    };
    let result = read_episode(&dir).and_then(|ep| {
        let (traj, proprio) = replay_episode(&ep)?;
        Ok((ep, traj, proprio))
    });
    match result {
        Ok((ep, traj, proprio)) => {
            let last = traj.last().expect("trajectory holds the reset state");
            report.deviation = FinalState::of(last).deviation(&ep.meta.final_state);
            report.proprio_match = ep.proprio_rows().is_ok_and(|rows| {
                rows.len() == proprio.len()
                    && rows
                        .iter()
                        .zip(&proprio)
                        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
            });
            report.stored_success = ep.meta.success;
            report.replay_success = check_success(&ep.meta.spec, &traj);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Checksums plus a full replay of every episode in the set.
pub fn validate(set: &DemonstrationSet) -> ValidationReport {
    ValidationReport {
        episodes: set
            .manifest
            .episodes
            .iter()
            .map(|e| validate_entry(set, e))
            .collect(),
    }
}
