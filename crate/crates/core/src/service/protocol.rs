//! Wire messages. Each record is one JSON object on its own line, tagged by
//! `type`; unknown fields are ignored.
//!
//! Client to server:
//!
//! ```text
//! {"type":"marker","t":1.25,"markers":{"EL1":[x,y,z],...}}
//! {"type":"wrist","t":1.25,"x":0.1,"y":-0.2,"z":0.3,"theta_p":0.4}
//! {"type":"gripper","event":"close"}            optional "t"
//! {"type":"trial","action":"start","target":"T2"}
//! {"type":"trial","action":"reset"}
//! {"type":"calibration","action":"begin"}       neutral | finalize | cancel
//! ```
//!
//! Server to client: `state`, `result`, `profile` and `error` records.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationProfile;
use crate::geometry::{MarkerFrame, MarkerLabel, Vec3};
use crate::interpreter::GrowthCommand;
use crate::robot::GripperEvent;
use crate::task::{BlockStatus, Phase, TargetId, TrialResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputMessage {
    /// Raw motion-capture sample; occluded markers may be omitted or null.
    Marker {
        t: f64,
        markers: HashMap<String, Option<[f64; 3]>>,
    },
    /// Wrist centroid in profile coordinates plus pronation angle.
    Wrist {
        t: f64,
        x: f64,
        y: f64,
        z: f64,
        theta_p: f64,
    },
    Gripper {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
        event: GripperEvent,
    },
    Trial(TrialAction),
    Calibration {
        action: CalibrationAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TrialAction {
    Start { target: TargetId },
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationAction {
    Begin,
    Neutral,
    Finalize,
    Cancel,
}

impl InputMessage {
    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("input messages serialize")
    }

    /// Builds a marker message from a frame, omitting occluded markers.
    pub fn from_frame(frame: &MarkerFrame) -> Self {
        let markers = MarkerLabel::ALL
            .into_iter()
            .filter_map(|l| frame.get(l).map(|p| (l.as_str().to_string(), Some([p.x, p.y, p.z]))))
            .collect();
        InputMessage::Marker { t: frame.t, markers }
    }
}

/// Decodes the marker map of a `marker` message.
pub fn markers_to_frame(t: f64, markers: &HashMap<String, Option<[f64; 3]>>) -> Result<MarkerFrame, String> {
    let mut frame = MarkerFrame::new(t);
    for (name, p) in markers {
        let label = MarkerLabel::parse(name).ok_or_else(|| format!("unknown marker {name:?}"))?;
        frame.set(label, p.map(Vec3::from));
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "theta")]
    pub bend: f64,
    #[serde(rename = "phi")]
    pub azimuth: f64,
    #[serde(rename = "gamma")]
    pub gripper: f64,
    pub gripper_closed: bool,
    pub tip: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSnapshot {
    pub center: [f64; 3],
    pub yaw: f64,
    #[serde(flatten)]
    pub status: BlockStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSnapshot {
    pub phase: Phase,
    pub clock: f64,
    pub target: TargetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub u: f64,
    pub v: f64,
    pub growth: GrowthCommand,
    pub gripper_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Marker,
    Proxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub tick: u64,
    pub mode: InputMode,
    pub calibrating: bool,
    pub robot: RobotSnapshot,
    pub block: BlockSnapshot,
    pub trial: Option<TrialSnapshot>,
    pub command: CommandEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedMessage,
    ModeMismatch,
    TrialActive,
    Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateSnapshot),
    Result {
        trial: u64,
        #[serde(flatten)]
        result: TrialResult,
    },
    Profile {
        profile: CalibrationProfile,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}
