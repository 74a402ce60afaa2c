//! Scripted synthetic operator.
//!
//! The operator runs a mirror [`Engine`] in lockstep with the trace it is
//! writing, so every decision sees exactly the state a replay of that trace
//! will reach. Desired commands are turned into marker frames by inverting
//! the interpreter: the wrist is placed where normalization and the
//! deadband yield the command, and the forearm is twisted to the pronation
//! that yields the gripper angle.

use nalgebra::Rotation3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::CalibrationProfile;
use crate::engine::{Engine, SampleInput};
use crate::geometry::{wrap_angle, MarkerFrame, MarkerLabel, Vec3};
use crate::interpreter::{GrowthCommand, SteerCommand, COMMAND_RATE_HZ, TIME_EPS};
use crate::io::{MarkerTrace, TraceRecord, TRACE_RATE_HZ};
use crate::replay::{run_replay, ReplayOutput};
use crate::robot::{lateral_to_bend, max_lateral, steer_for, GripperEvent, RobotConfig, RobotError, RobotState};
use crate::task::{make_scenario, BlockStatus, Scenario, TargetId};

/// Operator reach box in the chest frame (m) and neutral pronation (rad).
pub const REACH_X: (f64, f64) = (-0.25, 0.45);
pub const REACH_Y: (f64, f64) = (-0.45, 0.15);
pub const REACH_Z: (f64, f64) = (0.15, 0.60);
pub const NEUTRAL_PRONATION: f64 = 0.35;

/// Tip height above the block centre when grasping.
const GRASP_HEIGHT: f64 = 0.016;
/// Gap left under the block when it is released.
const RELEASE_GAP: f64 = 0.002;
const LIFT: f64 = 0.10;
const ALIGN_TOL: f64 = 0.01;
const AZIMUTH_TURN_TOL: f64 = 0.05;
/// Bend (as a fraction of the maximum) used while swinging the azimuth.
const TURN_BEND: f64 = 0.03;
const ARRIVE_TOL: f64 = 0.005;
const SETTLE_TIMEOUT: f64 = 1.0;
const TAIL: f64 = 0.2;
const MAX_GRASP_ATTEMPTS: u32 = 3;

/// Profile matching the synthetic operator's reach.
pub fn operator_profile() -> CalibrationProfile {
    CalibrationProfile::from_limits(REACH_X, REACH_Y, REACH_Z, NEUTRAL_PRONATION)
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub config: RobotConfig,
    /// Half-width of the uniform noise added to every marker coordinate (m).
    pub noise: f64,
    /// Trace length cap (s).
    pub time_limit: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            config: RobotConfig::default(),
            noise: 0.0005,
            time_limit: 60.0,
        }
    }
}

/// Marker geometry of a seated operator, placed at a random pose in the
/// capture volume.
struct Operator {
    rotation: Rotation3<f64>,
    translation: Vec3,
    noise: f64,
    rng: ChaCha8Rng,
}

impl Operator {
    fn new(seed: u64, noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        let rotation = Rotation3::from_euler_angles(
            rng.gen_range(-pi..pi),
            rng.gen_range(-pi / 2.0..pi / 2.0),
            rng.gen_range(-pi..pi),
        );
        let translation = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        Self {
            rotation,
            translation,
            noise,
            rng,
        }
    }

    /// Marker frame for wrist centroid `wr` (chest frame) and pronation `theta_p`.
    fn frame(&mut self, t: f64, wr: Vec3, theta_p: f64) -> MarkerFrame {
        let x = Vec3::x();
        let twist = Vec3::new(theta_p.cos(), theta_p.sin(), 0.0);
        let elbow = wr + Vec3::new(0.0, 0.0, -0.25);
        let local = [
            (MarkerLabel::EL1, elbow - 0.03 * x),
            (MarkerLabel::EL2, elbow + 0.03 * x),
            (MarkerLabel::WR1, wr - 0.025 * twist),
            (MarkerLabel::WR2, wr + 0.025 * twist),
            (MarkerLabel::CH1, Vec3::zeros()),
            (MarkerLabel::CH2, Vec3::new(0.2, 0.0, 0.0)),
            (MarkerLabel::ABD, Vec3::new(0.05, -0.3, 0.0)),
        ];
        let mut frame = MarkerFrame::new(t);
        for (label, p) in local {
            let mut world = self.rotation * p + self.translation;
            if self.noise > 0.0 {
                for c in world.iter_mut() {
                    *c += self.rng.gen_range(-self.noise..=self.noise);
                }
            }
            frame.set(label, Some(world));
        }
        frame
    }
}

/// Wrist position and pronation that the interpreter maps to the command.
fn invert_command(
    steer: SteerCommand,
    growth: GrowthCommand,
    gripper: f64,
    profile: &CalibrationProfile,
) -> (Vec3, f64) {
    let lerp = |c: f64, lo: f64, hi: f64| lo + 0.5 * (c + 1.0) * (hi - lo);
    let y = match growth {
        GrowthCommand::Hold => 0.5 * (profile.db_l + profile.db_u),
        GrowthCommand::Grow => 0.5 * (profile.y_low + profile.db_l),
        GrowthCommand::Retract => 0.5 * (profile.db_u + profile.y_high),
    };
    let wr = Vec3::new(
        lerp(steer.u, profile.x_left, profile.x_right),
        y,
        lerp(steer.v, profile.z_back, profile.z_front),
    );
    (wr, wrap_angle(gripper + profile.theta_offset))
}

/// Robot configuration `(bend, azimuth, length)` that puts the tip at `p`.
fn aim(p: &Vec3, config: &RobotConfig) -> Result<(f64, f64, f64), RobotError> {
    let base = config.base();
    let (dx, dz) = (p.x - base.x, p.z - base.z);
    let rho = dx.hypot(dz);
    let drop = base.y - p.y;
    let out_of_reach = |length: f64| RobotError::OutOfReach {
        rho,
        max: max_lateral(length, config.bend_max),
        length,
    };
    if drop <= 0.0 {
        return Err(out_of_reach(0.0));
    }
    let half = rho.atan2(drop);
    let length = if half < 1e-9 {
        drop
    } else {
        drop * (2.0 * half) / (2.0 * half).sin()
    };
    if length > config.length_max || length < config.length_min {
        return Err(out_of_reach(length));
    }
    let bend = lateral_to_bend(rho, length, config.bend_max)?;
    Ok((bend, dz.atan2(dx), length))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Approach,
    Closing,
    Lift { length: f64 },
    Transport,
    Settling { since: f64 },
    Releasing,
    Tail { until: f64 },
}

struct Decision {
    steer: SteerCommand,
    growth: GrowthCommand,
    event: Option<GripperEvent>,
}

struct Script<'a> {
    config: &'a RobotConfig,
    stage: Stage,
    attempts: u32,
    steer: SteerCommand,
}

impl Script<'_> {
    fn growth_step(&self) -> f64 {
        self.config.growth_rate / COMMAND_RATE_HZ
    }

    fn steer_toward(&mut self, robot: &RobotState, bend: f64, azimuth: f64) -> bool {
        if bend < 1e-6 {
            self.steer = SteerCommand::new(0.0, 0.0);
            return robot.bend < ALIGN_TOL;
        }
        let az_err = wrap_angle(azimuth - robot.azimuth).abs();
        let cmd_bend = if az_err > AZIMUTH_TURN_TOL && robot.bend > 0.0 {
            bend.min(TURN_BEND * self.config.bend_max)
        } else {
            bend
        };
        self.steer = steer_for(cmd_bend, azimuth, self.config);
        (robot.bend - bend).abs() < ALIGN_TOL && az_err < ALIGN_TOL
    }

    fn grow_toward(&self, robot: &RobotState, length: f64) -> GrowthCommand {
        let half = 0.5 * self.growth_step();
        if robot.length < length - half {
            GrowthCommand::Grow
        } else if robot.length > length + half {
            GrowthCommand::Retract
        } else {
            GrowthCommand::Hold
        }
    }

    fn decide(&mut self, t: f64, engine: &Engine) -> Result<Option<Decision>, RobotError> {
        let robot = *engine.robot();
        let world = engine.world();
        let tip = engine.tip().position;
        let trial_over = world.trial.as_ref().is_none_or(|tr| tr.phase.is_terminal());
        if trial_over && !matches!(self.stage, Stage::Tail { .. }) {
            self.stage = Stage::Tail { until: t + TAIL };
        }
        let hold = |steer| Decision {
            steer,
            growth: GrowthCommand::Hold,
            event: None,
        };
        let decision = match self.stage {
            Stage::Approach => {
                let goal = world.block.center + Vec3::new(0.0, GRASP_HEIGHT, 0.0);
                let (bend, azimuth, length) = aim(&goal, self.config)?;
                let aligned = self.steer_toward(&robot, bend, azimuth);
                let growth = if aligned {
                    self.grow_toward(&robot, length)
                } else {
                    GrowthCommand::Hold
                };
                if aligned && growth == GrowthCommand::Hold && (tip - goal).norm() < ARRIVE_TOL {
                    self.stage = Stage::Closing;
                    self.attempts += 1;
                    Decision {
                        event: Some(GripperEvent::Close),
                        ..hold(self.steer)
                    }
                } else {
                    Decision {
                        steer: self.steer,
                        growth,
                        event: None,
                    }
                }
            }
            Stage::Closing => {
                if !robot.gripper_closed {
                    hold(self.steer)
                } else if world.block.status == BlockStatus::Held {
                    self.stage = Stage::Lift {
                        length: robot.length - LIFT,
                    };
                    hold(self.steer)
                } else if self.attempts >= MAX_GRASP_ATTEMPTS {
                    return Ok(None);
                } else {
                    self.stage = Stage::Approach;
                    Decision {
                        event: Some(GripperEvent::Open),
                        ..hold(self.steer)
                    }
                }
            }
            Stage::Lift { length } => {
                let growth = self.grow_toward(&robot, length);
                if growth == GrowthCommand::Hold {
                    self.stage = Stage::Transport;
                }
                Decision {
                    steer: self.steer,
                    growth,
                    event: None,
                }
            }
            Stage::Transport | Stage::Settling { .. } => {
                let scenario = &world.scenario;
                let block_goal = scenario.active_target().top
                    + Vec3::new(0.0, scenario.half_edge() + RELEASE_GAP, 0.0);
                let tip_goal = block_goal - world.grasp_offset();
                let (bend, azimuth, length) = aim(&tip_goal, self.config)?;
                let aligned = self.steer_toward(&robot, bend, azimuth);
                let growth = if aligned {
                    self.grow_toward(&robot, length)
                } else {
                    GrowthCommand::Hold
                };
                let arrived = aligned && growth == GrowthCommand::Hold;
                match self.stage {
                    Stage::Transport if arrived => self.stage = Stage::Settling { since: t },
                    Stage::Settling { since } => {
                        let close = (tip - tip_goal).norm() < ARRIVE_TOL;
                        if arrived && (close || t - since > SETTLE_TIMEOUT) {
                            self.stage = Stage::Releasing;
                            return Ok(Some(Decision {
                                event: Some(GripperEvent::Open),
                                ..hold(self.steer)
                            }));
                        }
                    }
                    _ => {}
                }
                Decision {
                    steer: self.steer,
                    growth,
                    event: None,
                }
            }
            Stage::Releasing => hold(self.steer),
            Stage::Tail { until } => {
                if t > until {
                    return Ok(None);
                }
                hold(self.steer)
            }
        };
        Ok(Some(decision))
    }
}

/// Writes a marker trace that performs one pick-and-place toward the
/// scenario's active target.
pub fn synth_operator(
    scenario: &Scenario,
    profile: &CalibrationProfile,
    seed: u64,
    options: &SynthOptions,
) -> Result<MarkerTrace, RobotError> {
    let config = &options.config;
    // Fail early if either end of the task is out of reach.
    let start_goal = scenario.initial_block().center + Vec3::new(0.0, GRASP_HEIGHT, 0.0);
    aim(&start_goal, config)?;
    let place = scenario.rest_center(scenario.active_target()) + Vec3::new(0.0, GRASP_HEIGHT + RELEASE_GAP, 0.0);
    aim(&place, config)?;

    let mut mirror = Engine::new(*config, *profile, scenario.clone());
    mirror.start_trial(scenario.active);
    let mut operator = Operator::new(seed, options.noise);
    let mut script = Script {
        config,
        stage: Stage::Approach,
        attempts: 0,
        steer: SteerCommand::default(),
    };
    let mut trace = MarkerTrace::new();
    let gripper = mirror.robot().gripper;
    for n in 0.. {
        let t = n as f64 / TRACE_RATE_HZ;
        if t > options.time_limit {
            break;
        }
        while mirror.next_tick_time() < t - TIME_EPS {
            mirror.tick();
        }
        let Some(decision) = script.decide(t, &mirror)? else {
            break;
        };
        let (wr, theta_p) = invert_command(decision.steer, decision.growth, gripper, profile);
        let frame = operator.frame(t, wr, theta_p);
        mirror.push_sample(t, SampleInput::Markers(frame.clone()));
        if let Some(event) = decision.event {
            mirror.push_gripper(Some(t), event);
        }
        trace
            .push(TraceRecord {
                frame,
                gripper: decision.event,
            })
            .expect("trace timestamps increase");
    }
    Ok(trace)
}

/// A calibration sweep by the synthetic operator: a neutral first frame,
/// then the wrist visits every corner of the reach box and returns.
pub fn synth_calibration_trace(seed: u64, noise: f64) -> MarkerTrace {
    let mut operator = Operator::new(seed, noise);
    let profile = operator_profile();
    let (cx, cy, cz) = profile.center();
    let center = Vec3::new(cx, cy, cz);
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { REACH_X.0 } else { REACH_X.1 },
            if i & 2 == 0 { REACH_Y.0 } else { REACH_Y.1 },
            if i & 4 == 0 { REACH_Z.0 } else { REACH_Z.1 },
        )
    };
    let mut waypoints = vec![center];
    waypoints.extend((0..8).map(corner));
    waypoints.push(center);
    let per_leg = (0.3 * TRACE_RATE_HZ) as usize;
    let mut trace = MarkerTrace::new();
    let mut n = 0usize;
    for leg in waypoints.windows(2) {
        for i in 0..per_leg {
            let s = i as f64 / per_leg as f64;
            let wr = leg[0].lerp(&leg[1], s);
            let t = n as f64 / TRACE_RATE_HZ;
            let frame = operator.frame(t, wr, NEUTRAL_PRONATION);
            trace.push(TraceRecord { frame, gripper: None }).expect("increasing");
            n += 1;
        }
    }
    trace
}

/// One scripted trial and its replay.
#[derive(Debug, Clone)]
pub struct ScriptedTrial {
    pub target: TargetId,
    pub seed: u64,
    pub trace: MarkerTrace,
    pub replay: ReplayOutput,
}

/// Runs `trials` rounds over `targets`, each trial with its own seed
/// derived from `seed`. Every trace is replayed through the full pipeline.
pub fn run_scripted(
    targets: &[TargetId],
    trials: usize,
    seed: u64,
    options: &SynthOptions,
) -> Result<Vec<ScriptedTrial>, RobotError> {
    let profile = operator_profile();
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials * targets.len());
    for _ in 0..trials {
        for &target in targets {
            let trial_seed = seeds.next_u64();
            let scenario = make_scenario(target);
            let trace = synth_operator(&scenario, &profile, trial_seed, options)?;
            let replay = run_replay(&trace, &profile, target, &options.config);
            log::info!(
                "trial {} {target}: {:?}",
                out.len() + 1,
                replay.result.as_ref().map(|r| r.tpe_cm)
            );
            out.push(ScriptedTrial {
                target,
                seed: trial_seed,
                trace,
                replay,
            });
        }
    }
    Ok(out)
}
