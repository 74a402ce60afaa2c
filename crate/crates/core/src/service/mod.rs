//! Live session: queued operator input applied at 66 Hz tick boundaries,
//! state snapshots every second tick.

mod protocol;
mod runner;

pub use protocol::*;
pub use runner::{run_loop, ClientId, Inbound, LoopStats, ManualTicker, RealTimeTicker, Ticker, TICK_BUDGET};

use log::{debug, info};
use thiserror::Error;

use crate::calibration::CalibrationProfile;
use crate::engine::{Engine, SampleInput, TickOutput};
use crate::geometry::Vec3;
use crate::robot::{GripperEvent, RobotConfig};
use crate::task::{make_scenario, DropScatter, TargetId, TaskWorld};

/// Snapshots go out on every `SNAPSHOT_EVERY`-th tick (33 Hz).
pub const SNAPSHOT_EVERY: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("{got} input not accepted in {mode:?} mode")]
    ModeMismatch { mode: InputMode, got: &'static str },
    #[error("a trial is already running")]
    TrialActive,
}

impl ServiceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::MalformedMessage(_) => ErrorCode::MalformedMessage,
            ServiceError::ModeMismatch { .. } => ErrorCode::ModeMismatch,
            ServiceError::TrialActive => ErrorCode::TrialActive,
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Error {
            code: self.code(),
            message: self.to_string(),
        }
    }
}

/// A validated input waiting for the next tick.
#[derive(Debug, Clone, PartialEq)]
enum Queued {
    Sample(f64, SampleInput),
    Gripper(Option<f64>, GripperEvent),
    Trial(TrialAction),
    Calibration(CalibrationAction),
}

/// What one session tick produced.
#[derive(Debug, Clone)]
pub struct SessionTick {
    pub output: TickOutput,
    /// Messages for every subscriber, in order.
    pub broadcast: Vec<ServerMessage>,
}

#[derive(Debug, Clone)]
pub struct Session {
    engine: Engine,
    mode: InputMode,
    queue: Vec<Queued>,
    trials_finished: u64,
}

impl Session {
    pub fn new(config: RobotConfig, profile: CalibrationProfile, mode: InputMode) -> Self {
        Self {
            engine: Engine::new(config, profile, make_scenario(TargetId::T1)),
            mode,
            queue: Vec::new(),
            trials_finished: 0,
        }
    }

    /// Enables landing scatter for released blocks.
    pub fn with_scatter(mut self, scatter: DropScatter) -> Self {
        let world = TaskWorld::new(self.engine.world().scenario.clone()).with_scatter(scatter);
        self.engine = self.engine.with_world(world);
        self
    }

    pub fn mode(&self) -> InputMode {
        self.mode
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn start_pending(&self) -> bool {
        self.queue
            .iter()
            .any(|q| matches!(q, Queued::Trial(TrialAction::Start { .. })))
    }

    /// Parses and queues one wire line.
    pub fn apply_line(&mut self, line: &str) -> Result<(), ServiceError> {
        let msg = InputMessage::parse(line).map_err(ServiceError::MalformedMessage)?;
        self.apply_input(msg)
    }

    /// Validates `msg` and queues it for the next tick boundary. A rejected
    /// message leaves the session untouched.
    pub fn apply_input(&mut self, msg: InputMessage) -> Result<(), ServiceError> {
        let malformed = |m: &str| Err(ServiceError::MalformedMessage(m.to_string()));
        let queued = match msg {
            InputMessage::Marker { t, ref markers } => {
                if self.mode != InputMode::Marker {
                    return Err(ServiceError::ModeMismatch {
                        mode: self.mode,
                        got: "marker",
                    });
                }
                let frame = markers_to_frame(t, markers).map_err(ServiceError::MalformedMessage)?;
                if !t.is_finite() || !frame.is_finite() {
                    return malformed("non-finite marker sample");
                }
                Queued::Sample(t, SampleInput::Markers(frame))
            }
            InputMessage::Wrist { t, x, y, z, theta_p } => {
                if self.mode != InputMode::Proxy {
                    return Err(ServiceError::ModeMismatch {
                        mode: self.mode,
                        got: "wrist",
                    });
                }
                if ![t, x, y, z, theta_p].iter().all(|v| v.is_finite()) {
                    return malformed("non-finite wrist sample");
                }
                Queued::Sample(
                    t,
                    SampleInput::Wrist {
                        wr: Vec3::new(x, y, z),
                        theta_p,
                    },
                )
            }
            InputMessage::Gripper { t, event } => {
                if t.is_some_and(|t| !t.is_finite()) {
                    return malformed("non-finite gripper timestamp");
                }
                Queued::Gripper(t, event)
            }
            InputMessage::Trial(action) => {
                if matches!(action, TrialAction::Start { .. })
                    && (self.engine.world().trial_active() || self.start_pending())
                {
                    return Err(ServiceError::TrialActive);
                }
                Queued::Trial(action)
            }
            InputMessage::Calibration { action } => Queued::Calibration(action),
        };
        self.queue.push(queued);
        Ok(())
    }

    /// Applies queued input, then advances the engine one tick.
    pub fn tick(&mut self) -> SessionTick {
        let mut broadcast = Vec::new();
        for q in std::mem::take(&mut self.queue) {
            match q {
                Queued::Sample(t, input) => {
                    self.engine.push_sample(t, input);
                }
                Queued::Gripper(t, event) => self.engine.push_gripper(t, event),
                Queued::Trial(TrialAction::Start { target }) => {
                    info!("trial start toward {target}");
                    self.engine.start_trial(target);
                }
                Queued::Trial(TrialAction::Reset) => self.engine.reset(),
                Queued::Calibration(action) => {
                    if let Some(msg) = self.calibrate(action) {
                        broadcast.push(msg);
                    }
                }
            }
        }
        let output = self.engine.tick();
        if let Some(result) = &output.finished {
            self.trials_finished += 1;
            info!("trial {} finished: {result:?}", self.trials_finished);
            broadcast.push(ServerMessage::Result {
                trial: self.trials_finished,
                result: result.clone(),
            });
        }
        if !output.events.is_empty() {
            debug!("t={:.3} events {:?}", output.t, output.events);
        }
        if self.engine.tick_count().is_multiple_of(SNAPSHOT_EVERY) {
            broadcast.push(ServerMessage::State(self.snapshot()));
        }
        SessionTick { output, broadcast }
    }

    fn calibrate(&mut self, action: CalibrationAction) -> Option<ServerMessage> {
        let err = |e: crate::calibration::CalibrationError| ServerMessage::Error {
            code: ErrorCode::Calibration,
            message: e.to_string(),
        };
        match action {
            CalibrationAction::Begin => {
                self.engine.begin_calibration();
                None
            }
            CalibrationAction::Neutral => self.engine.capture_neutral().err().map(err),
            CalibrationAction::Finalize => Some(match self.engine.finalize_calibration() {
                Ok(profile) => ServerMessage::Profile { profile },
                Err(e) => err(e),
            }),
            CalibrationAction::Cancel => {
                self.engine.cancel_calibration();
                None
            }
        }
    }

    /// Current state as an immutable value.
    pub fn snapshot(&self) -> StateSnapshot {
        let robot = self.engine.robot();
        let tip = self.engine.tip().position;
        let world = self.engine.world();
        let cmd = self.engine.last_command();
        StateSnapshot {
            t: self.engine.now(),
            tick: self.engine.tick_count(),
            mode: self.mode,
            calibrating: self.engine.is_calibrating(),
            robot: RobotSnapshot {
                length: robot.length,
                bend: robot.bend,
                azimuth: robot.azimuth,
                gripper: robot.gripper,
                gripper_closed: robot.gripper_closed,
                tip: [tip.x, tip.y, tip.z],
            },
            block: BlockSnapshot {
                center: world.block.center.into(),
                yaw: world.block.yaw,
                status: world.block.status,
            },
            trial: world.trial.as_ref().map(|tr| TrialSnapshot {
                phase: tr.phase,
                clock: tr.clock,
                target: tr.target,
            }),
            command: CommandEcho {
                u: cmd.steer.u,
                v: cmd.steer.v,
                growth: cmd.growth,
                gripper_angle: cmd.gripper_angle,
            },
        }
    }
}
