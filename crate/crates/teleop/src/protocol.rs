//! Wire messages. Every message is one JSON object in a text frame, tagged
//! by its `type` field.

use serde::{Deserialize, Serialize};
use surgbench_core::camera::CameraRig;
use surgbench_core::success::check_success;
use surgbench_core::{ArmAction, JawCommand, Pose, SceneState, TaskName, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordCmd {
    Start,
    Stop,
    Save,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        client: Option<String>,
    },
    /// Deltas for one arm; every other arm holds its jaw command.
    Action {
        #[serde(default)]
        arm: usize,
        dpos: [f64; 3],
        drot: [f64; 3],
        jaw: u8,
    },
    /// Step once with every arm holding still.
    Hold,
    Record {
        cmd: RecordCmd,
    },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ClientMessage {
    /// The arm command an `action` message asks for, if it is well formed.
    pub fn arm_action(
        arm: usize,
        dpos: [f64; 3],
        drot: [f64; 3],
        jaw: u8,
        num_arms: usize,
    ) -> Result<ArmAction, String> {
        if arm >= num_arms {
            return Err(format!("arm {arm} does not exist on a {num_arms}-arm task"));
        }
        let jaw = match jaw {
            0 => JawCommand::Open,
            1 => JawCommand::Close,
            other => return Err(format!("jaw must be 0 or 1, got {other}")),
        };
        Ok(ArmAction { dpos, drot, jaw })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not valid JSON or not a known message.
    BadMessage,
    /// A well-formed `action` with values the task cannot take.
    BadAction,
    /// Anything other than `hello` before the handshake.
    Handshake,
    NotRecording,
    EpisodeOver,
    /// Another client holds the session.
    Busy,
    Internal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Recording,
    Idle,
    Saved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: i32,
    pub position: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStateMsg {
    /// Position, quaternion and jaw opening, as in the dataset proprio rows.
    pub proprio: [f64; 8],
    pub jaw_cmd: u8,
    pub holding: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub step_count: u32,
    pub success: bool,
    pub over: bool,
    pub recording: bool,
    pub objects: Vec<ObjectState>,
    pub arms: Vec<ArmStateMsg>,
}

impl StateMessage {
    pub fn object_pose(&self, id: i32) -> Option<Pose> {
        self.objects.iter().find(|o| o.id == id).map(|o| Pose {
            position: o.position,
            orientation: o.orientation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    Spec {
        session: u64,
        task: TaskName,
        num_arms: usize,
        horizon: u32,
        rate_hz: f64,
        seed: u64,
        /// Per-step clamps the server applies to `dpos` (m) and `drot` (rad).
        max_step_translation: f64,
        max_step_rotation: f64,
        rig: CameraRig,
        spec: TaskSpec,
    },
    State(StateMessage),
    Frame {
        step_count: u32,
        camera: String,
        /// Base64-encoded PNG.
        png: String,
    },
    Record {
        status: RecordStatus,
        steps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episode: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
    },
    Error {
        code: ErrorCode,
        msg: String,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, msg: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            msg: msg.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// State snapshot of `trajectory`'s last scene; success is judged over the
/// whole trajectory.
pub fn state_message(spec: &TaskSpec, trajectory: &[SceneState], recording: bool) -> StateMessage {
    let scene = trajectory
        .last()
        .expect("trajectory has at least the reset state");
    StateMessage {
        step_count: scene.step_count,
        success: check_success(spec, trajectory),
        over: scene.is_over(),
        recording,
        objects: scene
            .objects
            .iter()
            .map(|(id, p)| ObjectState {
                id: id.0,
                position: p.position,
                orientation: p.orientation,
            })
            .collect(),
        arms: scene
            .arms
            .iter()
            .map(|a| ArmStateMsg {
                proprio: a.proprio(),
                jaw_cmd: a.jaw_cmd.as_f64() as u8,
                holding: a.attached_id().map(|id| id.0),
            })
            .collect(),
    }
}

/// JSON text of a `state` message.
pub fn encode_state_message(spec: &TaskSpec, trajectory: &[SceneState], recording: bool) -> String {
    ServerMessage::State(state_message(spec, trajectory, recording)).to_json()
}
