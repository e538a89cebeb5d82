//! One teleoperation session: an environment, an optional recording, and the
//! message handling around them. Transport-agnostic; see `server` for sockets.

use std::path::PathBuf;

use base64::Engine;
use surgbench_core::camera::CameraRig;
use surgbench_core::dataset::{Capture, DemonstrationSet, EpisodeRecorder, Source};
use surgbench_core::render::render;
use surgbench_core::success::check_success;
use surgbench_core::{reset_task, Action, ArmAction, SceneState, TaskSpec};

use crate::protocol::{
    state_message, ClientMessage, ErrorCode, RecordCmd, RecordStatus, ServerMessage,
};

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub spec: TaskSpec,
    pub seed: u64,
    /// Advertised tick rate. Stepping is lockstep: one step per `action` or `hold`.
    pub rate_hz: f64,
    pub rig: CameraRig,
    /// Dataset that saved episodes are appended to; created on first use.
    pub dataset: PathBuf,
    /// Observations stored with new recordings when the dataset is created.
    pub capture: Option<Capture>,
    /// Send a primary-camera `frame` every this many steps.
    pub frame_every: Option<u32>,
}

pub struct Session {
    pub id: u64,
    config: SessionConfig,
    seed: u64,
    trajectory: Vec<SceneState>,
    recorder: Option<EpisodeRecorder>,
    greeted: bool,
}

type Reply = Vec<ServerMessage>;

fn fail(code: ErrorCode, msg: impl Into<String>) -> Reply {
    vec![ServerMessage::error(code, msg)]
}

impl Session {
    pub fn new(id: u64, config: SessionConfig) -> surgbench_core::Result<Self> {
        let start = reset_task(&config.spec, config.seed)?;
        Ok(Self {
            id,
            seed: config.seed,
            config,
            trajectory: vec![start],
            recorder: None,
            greeted: false,
        })
    }

    pub fn scene(&self) -> &SceneState {
        self.trajectory.last().expect("trajectory is never empty")
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    /// Parse one text frame and handle it. Malformed input gets an `error`
    /// reply and leaves the session as it was.
    pub fn handle_text(&mut self, text: &str) -> Reply {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => {
                let is_action = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| {
                        v.get("type")
                            .and_then(|t| t.as_str().map(|t| t == "action"))
                    })
                    .unwrap_or(false);
                let code = if is_action {
                    ErrorCode::BadAction
                } else {
                    ErrorCode::BadMessage
                };
                fail(code, e.to_string())
            }
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        if !self.greeted && !matches!(msg, ClientMessage::Hello { .. }) {
            return fail(ErrorCode::Handshake, "send hello first");
        }
        match msg {
            ClientMessage::Hello { .. } => {
                self.greeted = true;
                vec![self.spec_message(), self.state()]
            }
            ClientMessage::Action {
                arm,
                dpos,
                drot,
                jaw,
            } => {
                let num_arms = self.config.spec.num_arms;
                match ClientMessage::arm_action(arm, dpos, drot, jaw, num_arms) {
                    Ok(cmd) => {
                        let mut action = self.hold_action();
                        action.arms[arm] = cmd;
                        self.step(action)
                    }
                    Err(msg) => fail(ErrorCode::BadAction, msg),
                }
            }
            ClientMessage::Hold => self.step(self.hold_action()),
            ClientMessage::Record { cmd } => self.record(cmd),
            ClientMessage::Reset { seed } => {
                self.recorder = None;
                match self.reset(seed.unwrap_or(self.seed)) {
                    Ok(()) => vec![self.state()],
                    Err(e) => fail(ErrorCode::Internal, e.to_string()),
                }
            }
        }
    }

    fn spec_message(&self) -> ServerMessage {
        let spec = &self.config.spec;
        ServerMessage::Spec {
            session: self.id,
            task: spec.name,
            num_arms: spec.num_arms,
            horizon: spec.horizon,
            rate_hz: self.config.rate_hz,
            seed: self.seed,
            max_step_translation: spec.sim.max_step_translation,
            max_step_rotation: spec.sim.max_step_rotation,
            rig: self.config.rig.clone(),
            spec: spec.clone(),
        }
    }

    fn state(&self) -> ServerMessage {
        ServerMessage::State(state_message(
            &self.config.spec,
            &self.trajectory,
            self.is_recording(),
        ))
    }

    /// Zero deltas with each arm keeping its current jaw command.
    fn hold_action(&self) -> Action {
        Action {
            arms: self
                .scene()
                .arms
                .iter()
                .map(|a| ArmAction::hold(a.jaw_cmd))
                .collect(),
        }
    }

    fn reset(&mut self, seed: u64) -> surgbench_core::Result<()> {
        self.trajectory = vec![reset_task(&self.config.spec, seed)?];
        self.seed = seed;
        Ok(())
    }

    fn step(&mut self, action: Action) -> Reply {
        let scene = self.trajectory.last().expect("trajectory is never empty");
        if scene.is_over() {
            return fail(ErrorCode::EpisodeOver, "horizon reached; send reset");
        }
        // The same clamp-and-quantize the scripted collector applies.
        let stored = match self.recorder.as_mut() {
            Some(rec) => rec.record(scene, &action),
            None => Ok(action.clamped(&scene.props.sim).quantized()),
        };
        let next = match stored.and_then(|a| scene.step(&a)) {
            Ok(next) => next,
            Err(e) => return fail(ErrorCode::Internal, e.to_string()),
        };
        self.trajectory.push(next);
        let mut out = vec![self.state()];
        if let Some(frame) = self.frame() {
            out.push(frame);
        }
        out
    }

    fn frame(&self) -> Option<ServerMessage> {
        let every = self.config.frame_every.filter(|k| *k > 0)?;
        let scene = self.scene();
        if !scene.step_count.is_multiple_of(every) {
            return None;
        }
        let camera = &self.config.rig.primary;
        let png = render(scene, camera).encode_rgb_png().ok()?;
        Some(ServerMessage::Frame {
            step_count: scene.step_count,
            camera: camera.id.clone(),
            png: base64::engine::general_purpose::STANDARD.encode(png),
        })
    }

    fn open_dataset(&self) -> surgbench_core::Result<DemonstrationSet> {
        let root = &self.config.dataset;
        if root.join("manifest.toml").exists() {
            DemonstrationSet::open(root)
        } else {
            DemonstrationSet::create(root, self.config.spec.name, self.config.capture.clone())
        }
    }

    fn record(&mut self, cmd: RecordCmd) -> Reply {
        let status = |status, steps| ServerMessage::Record {
            status,
            steps,
            episode: None,
            index: None,
        };
        match cmd {
            // A recording always starts from the reset scene so it replays.
            RecordCmd::Start => {
                let capture = match self.open_dataset() {
                    Ok(set) => set.manifest.capture,
                    Err(e) => return fail(ErrorCode::Internal, e.to_string()),
                };
                if let Err(e) = self.reset(self.seed) {
                    return fail(ErrorCode::Internal, e.to_string());
                }
                self.recorder = Some(EpisodeRecorder::new(
                    &self.config.spec,
                    self.seed,
                    Source::Teleop,
                    capture,
                ));
                vec![status(RecordStatus::Recording, 0), self.state()]
            }
            RecordCmd::Stop => match self.recorder.take() {
                Some(_) => vec![status(RecordStatus::Idle, 0)],
                None => fail(ErrorCode::NotRecording, "nothing is being recorded"),
            },
            RecordCmd::Save => {
                let Some(rec) = self.recorder.take() else {
                    return fail(ErrorCode::NotRecording, "nothing is being recorded");
                };
                let steps = rec.steps();
                let success = check_success(&self.config.spec, &self.trajectory);
                let saved = rec.finish(self.scene(), success).and_then(|episode| {
                    let mut set = self.open_dataset()?;
                    let entry = set.append(&episode)?;
                    Ok((entry.name, set.len() - 1))
                });
                match saved {
                    Ok((name, index)) => vec![ServerMessage::Record {
                        status: RecordStatus::Saved,
                        steps,
                        episode: Some(name),
                        index: Some(index),
                    }],
                    Err(e) => fail(ErrorCode::Internal, e.to_string()),
                }
            }
        }
    }
}
