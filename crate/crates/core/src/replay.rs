//! Offline execution of recorded input through the live pipeline.

use crate::calibration::{CalibrationError, CalibrationProfile, CalibrationSession};
use crate::engine::{Engine, SampleInput};
use crate::geometry::{to_body, WristState};
use crate::interpreter::{Command, STALE_AFTER, TIME_EPS};
use crate::io::MarkerTrace;
use crate::robot::{GripperEvent, RobotConfig, RobotState};
use crate::task::{make_scenario, TargetId, TaskError, TrialResult};

/// One timestamped input: a sample, a gripper event, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedInput {
    pub t: f64,
    pub sample: Option<SampleInput>,
    pub gripper: Option<GripperEvent>,
}

/// Converts a marker trace into the engine's input stream.
pub fn trace_inputs(trace: &MarkerTrace) -> Vec<TimedInput> {
    trace
        .records
        .iter()
        .map(|r| TimedInput {
            t: r.t(),
            sample: Some(SampleInput::Markers(r.frame.clone())),
            gripper: r.gripper,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub log: Vec<Command>,
    pub result: Result<TrialResult, TaskError>,
}

/// Queues one input on the engine, sample before gripper event.
pub fn push_input(engine: &mut Engine, input: &TimedInput) {
    if let Some(sample) = &input.sample {
        engine.push_sample(input.t, sample.clone());
    }
    if let Some(event) = input.gripper {
        engine.push_gripper(Some(input.t), event);
    }
}

/// Runs a trial toward `target` over `inputs`. Ticking stops on the tick
/// where the trial ends, or once the input has been stale for longer than
/// the safety timeout.
pub fn run_inputs(
    inputs: &[TimedInput],
    profile: &CalibrationProfile,
    target: TargetId,
    config: &RobotConfig,
) -> ReplayOutput {
    let mut engine = Engine::new(*config, *profile, make_scenario(target));
    engine.start_trial(target);
    for input in inputs {
        push_input(&mut engine, input);
    }
    let end = inputs.last().map_or(0.0, |i| i.t) + STALE_AFTER;
    let mut finished = None;
    while finished.is_none() && engine.next_tick_time() <= end + TIME_EPS {
        finished = engine.tick().finished;
    }
    ReplayOutput {
        log: engine.command_log().to_vec(),
        result: finished.map_or_else(|| engine.world().result(), Ok),
    }
}

pub fn run_replay(
    trace: &MarkerTrace,
    profile: &CalibrationProfile,
    target: TargetId,
    config: &RobotConfig,
) -> ReplayOutput {
    run_inputs(&trace_inputs(trace), profile, target, config)
}

/// Builds a profile from a calibration sweep, taking the first frame with
/// a measurable pronation angle as the neutral pose.
pub fn calibrate_trace(trace: &MarkerTrace, config: &RobotConfig) -> Result<CalibrationProfile, CalibrationError> {
    let mut session = CalibrationSession::new();
    let mut neutral = false;
    for frame in trace.frames() {
        let Ok(body) = to_body(frame) else { continue };
        if !neutral {
            if let Ok(theta) = WristState::from_body(&body).and_then(|w| w.theta_p) {
                session.capture_neutral(theta);
                neutral = true;
            }
        }
        session.feed_body(&body);
    }
    session.finalize(RobotState::initial(config).gripper)
}
