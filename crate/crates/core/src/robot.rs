//! Constant-curvature kinematic model of the growing manipulator.
//!
//! The body hangs from a fixed base and grows along −y. Its shape is a
//! circular arc described by arc length `L`, total bend angle `θ = κL` and
//! bend-plane azimuth `φ` measured in the world x–z plane from +x toward +z.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Vec3};
use crate::interpreter::{Command, GrowthCommand, SteerCommand};

/// Below this bend the closed-form arc is replaced by its series expansion.
pub const SERIES_BELOW: f64 = 1e-6;
/// Steering magnitude below which the azimuth setpoint is held.
pub const AZIMUTH_DEADZONE: f64 = 0.02;
/// Bisection termination width (rad).
pub const BEND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobotError {
    #[error("lateral offset {rho:.4} m exceeds the reachable {max:.4} m at L = {length:.4} m")]
    OutOfReach { rho: f64, max: f64, length: f64 },
    #[error("invalid robot config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub length_start: f64,
    pub length_max: f64,
    pub length_min: f64,
    pub body_radius: f64,
    /// Angular positions of the three steering cables (rad).
    pub cable_angles: [f64; 3],
    pub bend_max: f64,
    pub growth_rate: f64,
    pub bend_rate: f64,
    pub azimuth_rate: f64,
    pub gripper_rate: f64,
    pub base: [f64; 3],
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            length_start: 0.5,
            length_max: 1.5,
            length_min: 0.3,
            body_radius: 0.05,
            cable_angles: [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0],
            bend_max: 1.2,
            growth_rate: 0.05,
            bend_rate: 0.6,
            azimuth_rate: 1.2,
            gripper_rate: 2.0,
            base: [0.0, 1.0, 0.0],
        }
    }
}

impl RobotConfig {
    pub fn base(&self) -> Vec3 {
        Vec3::from(self.base)
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let bad = |m: &str| Err(RobotError::InvalidConfig(m.to_string()));
        if !(0.0 < self.length_min && self.length_min <= self.length_start && self.length_start <= self.length_max) {
            return bad("lengths must satisfy 0 < min <= start <= max");
        }
        if !(0.0 < self.bend_max && self.bend_max < PI) {
            return bad("bend_max must lie in (0, pi)");
        }
        let rates = [self.growth_rate, self.bend_rate, self.azimuth_rate, self.gripper_rate, self.body_radius];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("rates and radius must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub length: f64,
    pub bend: f64,
    pub azimuth: f64,
    pub gripper: f64,
    pub gripper_closed: bool,
}

impl RobotState {
    /// Straight, open gripper, at the starting length.
    pub fn initial(config: &RobotConfig) -> Self {
        Self {
            length: config.length_start,
            bend: 0.0,
            azimuth: 0.0,
            gripper: 0.0,
            gripper_closed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPose {
    pub position: Vec3,
    pub tangent: Vec3,
    pub gripper_yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperEvent {
    Open,
    Close,
    Toggle,
}

impl GripperEvent {
    /// Closure after applying the event to `closed`.
    pub fn apply(self, closed: bool) -> bool {
        match self {
            GripperEvent::Open => false,
            GripperEvent::Close => true,
            GripperEvent::Toggle => !closed,
        }
    }
}

/// Lateral offset `ρ` and axial drop `d` of an arc of length `length` bent by `bend`.
pub fn arc_offsets(length: f64, bend: f64) -> (f64, f64) {
    if bend.abs() < SERIES_BELOW {
        let b2 = bend * bend;
        (length * bend * (0.5 - b2 / 24.0), length * (1.0 - b2 / 6.0))
    } else {
        (length * (1.0 - bend.cos()) / bend, length * bend.sin() / bend)
    }
}

/// Point at arc length `s` along a body with total length `length` and bend `bend`.
pub fn arc_point(base: &Vec3, length: f64, bend: f64, azimuth: f64, s: f64) -> Vec3 {
    let partial = if length > 0.0 { bend * s / length } else { 0.0 };
    let (rho, drop) = arc_offsets(s, partial);
    base + Vec3::new(rho * azimuth.cos(), -drop, rho * azimuth.sin())
}

pub fn tip_pose(state: &RobotState, config: &RobotConfig) -> TipPose {
    let (sin_b, cos_b) = state.bend.sin_cos();
    let (sin_a, cos_a) = state.azimuth.sin_cos();
    TipPose {
        position: arc_point(&config.base(), state.length, state.bend, state.azimuth, state.length),
        tangent: Vec3::new(sin_b * cos_a, -cos_b, sin_b * sin_a),
        gripper_yaw: state.gripper,
    }
}

/// Steering cable lengths under the constant-curvature tendon model.
pub fn cable_lengths(state: &RobotState, config: &RobotConfig) -> [f64; 3] {
    config
        .cable_angles
        .map(|psi| state.length - state.bend * config.body_radius * (state.azimuth - psi).cos())
}

/// Bend-space setpoint for a steering command. `previous_azimuth` is kept
/// when the command is too close to neutral to define a direction.
pub fn steer_setpoint(cmd: &SteerCommand, previous_azimuth: f64, config: &RobotConfig) -> (f64, f64) {
    let magnitude = cmd.u.hypot(cmd.v).min(1.0);
    let azimuth = if magnitude < AZIMUTH_DEADZONE {
        previous_azimuth
    } else {
        cmd.v.atan2(cmd.u)
    };
    (magnitude * config.bend_max, azimuth)
}

/// Inverse of a steering setpoint: the command that requests `(bend, azimuth)`.
pub fn steer_for(bend: f64, azimuth: f64, config: &RobotConfig) -> SteerCommand {
    let m = (bend / config.bend_max).clamp(0.0, 1.0);
    SteerCommand::new(m * azimuth.cos(), m * azimuth.sin())
}

/// Largest lateral offset reachable at `length` with `bend_max`.
pub fn max_lateral(length: f64, bend_max: f64) -> f64 {
    arc_offsets(length, bend_max).0
}

/// Bend angle in `[0, bend_max]` producing lateral offset `rho` at `length`.
///
/// `(1 − cos θ)/θ` is strictly increasing on `(0, π)`, so bisection on the
/// bracket `[0, bend_max]` converges to the unique root.
pub fn lateral_to_bend(rho: f64, length: f64, bend_max: f64) -> Result<f64, RobotError> {
    let max = max_lateral(length, bend_max);
    if !(rho >= 0.0) || rho > max {
        return Err(RobotError::OutOfReach { rho, max, length });
    }
    let (mut lo, mut hi) = (0.0_f64, bend_max);
    while hi - lo >= BEND_TOL {
        let mid = 0.5 * (lo + hi);
        if arc_offsets(length, mid).0 < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn slew(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

/// Advances the robot by `dt` under `cmd`.
pub fn step(
    state: &RobotState,
    cmd: &Command,
    gripper_events: &[GripperEvent],
    dt: f64,
    config: &RobotConfig,
) -> RobotState {
    debug_assert!(dt > 0.0 && dt <= 0.1, "dt out of range: {dt}");
    let (bend_target, azimuth_target) = steer_setpoint(&cmd.steer, state.azimuth, config);
    let bend = slew(state.bend, bend_target, config.bend_rate * dt).clamp(0.0, config.bend_max);
    let azimuth_err = wrap_angle(azimuth_target - state.azimuth);
    let azimuth = if azimuth_err == 0.0 {
        state.azimuth
    } else {
        wrap_angle(state.azimuth + azimuth_err.clamp(-config.azimuth_rate * dt, config.azimuth_rate * dt))
    };
    let growth = match cmd.growth {
        GrowthCommand::Grow => config.growth_rate * dt,
        GrowthCommand::Hold => 0.0,
        GrowthCommand::Retract => -config.growth_rate * dt,
    };
    let length = (state.length + growth).clamp(config.length_min, config.length_max);
    let gripper = slew(state.gripper, cmd.gripper_angle, config.gripper_rate * dt).clamp(-PI, PI);
    let gripper_closed = gripper_events
        .iter()
        .fold(state.gripper_closed, |closed, e| e.apply(closed));
    RobotState {
        length,
        bend,
        azimuth,
        gripper,
        gripper_closed,
    }
}
