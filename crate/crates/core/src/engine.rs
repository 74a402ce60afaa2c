//! The 66 Hz pipeline: ingest samples up to the tick instant, interpret,
//! resample, step the robot and the task world.
//!
//! Offline replay and the live service drive the same [`Engine`], which is
//! what makes their command logs identical for identical inputs.

use std::collections::VecDeque;

use log::debug;

use crate::calibration::{CalibrationError, CalibrationProfile, CalibrationSession};
use crate::geometry::{to_body, GeometryError, MarkerFrame, Vec3, WristState};
use crate::interpreter::{tick_time, Command, Interpreter, Resampler, COMMAND_RATE_HZ, TIME_EPS};
use crate::robot::{step, tip_pose, GripperEvent, RobotConfig, RobotState, TipPose};
use crate::task::{Scenario, TargetId, TaskEvent, TaskWorld, TrialResult};

/// A timestamped operator input.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput {
    Markers(MarkerFrame),
    /// Wrist centroid already in the operator frame, with its pronation angle.
    Wrist { wr: Vec3, theta_p: f64 },
}

impl SampleInput {
    fn wrist_state(&self) -> Result<WristState, GeometryError> {
        match self {
            SampleInput::Markers(frame) => WristState::from_body(&to_body(frame)?),
            SampleInput::Wrist { wr, theta_p } => Ok(WristState::new(*wr, Ok(*theta_p))),
        }
    }
}

/// What one tick produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub t: f64,
    pub command: Command,
    pub events: Vec<TaskEvent>,
    /// Set on the tick where the active trial reached Done or Failed.
    pub finished: Option<TrialResult>,
}

#[derive(Debug, Clone)]
struct Calibrating {
    session: CalibrationSession,
    last_theta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: RobotConfig,
    profile: CalibrationProfile,
    interpreter: Interpreter,
    resampler: Resampler,
    robot: RobotState,
    world: TaskWorld,
    tick: u64,
    samples: VecDeque<(f64, SampleInput)>,
    gripper_events: VecDeque<(f64, GripperEvent)>,
    calibrating: Option<Calibrating>,
    log: Vec<Command>,
    last_sample_t: f64,
    input_errors: u64,
    last_result: Option<TrialResult>,
}

impl Engine {
    pub fn new(config: RobotConfig, profile: CalibrationProfile, scenario: Scenario) -> Self {
        let robot = RobotState::initial(&config);
        Self {
            config,
            profile,
            interpreter: Interpreter::new(),
            resampler: Resampler::with_initial(hold_for(&robot, 0.0)),
            robot,
            world: TaskWorld::new(scenario),
            tick: 0,
            samples: VecDeque::new(),
            gripper_events: VecDeque::new(),
            calibrating: None,
            log: Vec::new(),
            last_sample_t: f64::NEG_INFINITY,
            input_errors: 0,
            last_result: None,
        }
    }

    pub fn with_world(mut self, world: TaskWorld) -> Self {
        self.world = world;
        self
    }

    pub fn dt() -> f64 {
        1.0 / COMMAND_RATE_HZ
    }

    /// Time of the last completed tick.
    pub fn now(&self) -> f64 {
        tick_time(self.tick)
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn next_tick_time(&self) -> f64 {
        tick_time(self.tick + 1)
    }

    pub fn config(&self) -> &RobotConfig {
        &self.config
    }

    pub fn profile(&self) -> &CalibrationProfile {
        &self.profile
    }

    pub fn set_profile(&mut self, profile: CalibrationProfile) {
        self.profile = profile;
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn tip(&self) -> TipPose {
        tip_pose(&self.robot, &self.config)
    }

    pub fn world(&self) -> &TaskWorld {
        &self.world
    }

    pub fn command_log(&self) -> &[Command] {
        &self.log
    }

    /// Metrics of the most recently finished trial.
    pub fn last_result(&self) -> Option<&TrialResult> {
        self.last_result.as_ref()
    }

    pub fn last_command(&self) -> &Command {
        self.resampler.last_emitted()
    }

    pub fn input_errors(&self) -> u64 {
        self.input_errors
    }

    /// Most recent sample timestamp accepted.
    pub fn last_sample_time(&self) -> f64 {
        self.last_sample_t
    }

    /// Queues a sample for the first tick at or after `t`. Samples must be
    /// pushed in non-decreasing time order; returns false (and drops the
    /// sample) otherwise.
    pub fn push_sample(&mut self, t: f64, input: SampleInput) -> bool {
        if !(t >= self.last_sample_t) {
            debug!("dropping out-of-order sample at t={t}");
            self.input_errors += 1;
            return false;
        }
        self.last_sample_t = t;
        self.samples.push_back((t, input));
        true
    }

    /// Queues a gripper event; `None` applies it at the next tick.
    pub fn push_gripper(&mut self, t: Option<f64>, event: GripperEvent) {
        let t = t.unwrap_or(f64::NEG_INFINITY);
        self.gripper_events.push_back((t, event));
    }

    /// Puts the robot back to its starting configuration, the block on the
    /// start pillar, and opens a trial toward `target`.
    pub fn start_trial(&mut self, target: TargetId) {
        self.reset_robot();
        self.last_result = None;
        self.world.start_trial(target);
    }

    /// Resets robot and block; an unfinished trial is discarded.
    pub fn reset(&mut self) {
        self.reset_robot();
        self.world.reset();
    }

    fn reset_robot(&mut self) {
        self.robot = RobotState::initial(&self.config);
        self.resampler = Resampler::with_initial(hold_for(&self.robot, self.now()));
        self.gripper_events.clear();
    }

    pub fn begin_calibration(&mut self) {
        self.calibrating = Some(Calibrating {
            session: CalibrationSession::new(),
            last_theta: None,
        });
    }

    pub fn is_calibrating(&self) -> bool {
        self.calibrating.is_some()
    }

    /// Uses the latest sample's pronation as the neutral orientation.
    pub fn capture_neutral(&mut self) -> Result<(), CalibrationError> {
        let cal = self.calibrating.as_mut().ok_or(CalibrationError::InsufficientCoverage(
            "calibration not started".into(),
        ))?;
        let theta = cal.last_theta.ok_or(CalibrationError::NoNeutral)?;
        cal.session.capture_neutral(theta);
        Ok(())
    }

    /// Finishes calibration and installs the new profile. On error the
    /// session keeps calibrating so the operator can sweep further.
    pub fn finalize_calibration(&mut self) -> Result<CalibrationProfile, CalibrationError> {
        let cal = self.calibrating.as_ref().ok_or(CalibrationError::InsufficientCoverage(
            "calibration not started".into(),
        ))?;
        let profile = cal.session.finalize(self.robot.gripper)?;
        self.calibrating = None;
        self.profile = profile;
        self.interpreter = Interpreter::new();
        Ok(profile)
    }

    pub fn cancel_calibration(&mut self) {
        self.calibrating = None;
    }

    fn ingest(&mut self, now: f64) {
        while let Some((t, _)) = self.samples.front() {
            if *t > now + TIME_EPS {
                break;
            }
            let (t, input) = self.samples.pop_front().expect("front exists");
            let wrist = match input.wrist_state() {
                Ok(w) => w,
                Err(e) => {
                    debug!("sample at t={t} rejected: {e}");
                    self.input_errors += 1;
                    continue;
                }
            };
            if let Some(cal) = self.calibrating.as_mut() {
                cal.session.feed(t, &wrist);
                if let Ok(theta) = wrist.theta_p {
                    cal.last_theta = Some(theta);
                }
                continue;
            }
            match self.interpreter.interpret_wrist(t, &wrist, &self.profile) {
                Ok(cmd) => self.resampler.push(cmd),
                Err(e) => {
                    debug!("interpretation failed at t={t}: {e}");
                    self.input_errors += 1;
                }
            }
        }
    }

    fn due_gripper_events(&mut self, now: f64) -> Vec<GripperEvent> {
        let mut due = Vec::new();
        self.gripper_events.retain(|&(t, e)| {
            if t <= now + TIME_EPS {
                due.push(e);
                false
            } else {
                true
            }
        });
        due
    }

    /// Advances one command period.
    pub fn tick(&mut self) -> TickOutput {
        self.tick += 1;
        let now = tick_time(self.tick);
        let dt = Self::dt();
        self.ingest(now);
        let command = self.resampler.tick(now);
        let events = self.due_gripper_events(now);
        let was_active = self.world.trial_active();
        let before = self.robot;
        self.robot = step(&before, &command, &events, dt, &self.config);
        let task_events = self.world.advance(&before, &self.robot, &command, dt, &self.config);
        let finished = if was_active && !self.world.trial_active() {
            self.world.result().ok()
        } else {
            None
        };
        if let Some(result) = &finished {
            // Robot and block go straight back to the start once a trial ends.
            self.last_result = Some(result.clone());
            self.reset();
        }
        self.log.push(command);
        TickOutput {
            t: now,
            command,
            events: task_events,
            finished,
        }
    }
}

/// A command that holds the robot's current gripper angle and neutral steer.
fn hold_for(robot: &RobotState, t: f64) -> Command {
    Command {
        t,
        gripper_angle: robot.gripper,
        ..Command::default()
    }
}
