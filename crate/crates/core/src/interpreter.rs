//! Gesture interpretation: calibrated wrist state to robot commands, plus the
//! zero-order-hold resampler that turns the 270 Hz marker stream into the
//! 66 Hz command stream.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationProfile;
use crate::geometry::{to_body, transverse_coords, wrap_angle, BodyFrame, GeometryError, MarkerFrame, WristState};

/// Command output rate (Hz).
pub const COMMAND_RATE_HZ: f64 = 66.0;
/// Inputs older than this (s) trigger the safety command.
pub const STALE_AFTER: f64 = 0.100;
/// How long (s) a degenerate pronation may reuse the last gripper angle.
pub const PRONATION_HOLD: f64 = 0.250;
/// Slack (s) when comparing sample timestamps to tick instants.
pub const TIME_EPS: f64 = 1e-9;

/// Time of command tick `k`.
pub fn tick_time(k: u64) -> f64 {
    k as f64 / COMMAND_RATE_HZ
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum InterpretError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("pronation degenerate for {0:.3} s")]
    PronationLost(f64),
}

/// Normalized steering in the unit square: `u` left/right, `v` back/forward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SteerCommand {
    pub u: f64,
    pub v: f64,
}

impl SteerCommand {
    pub fn new(u: f64, v: f64) -> Self {
        Self {
            u: u.clamp(-1.0, 1.0),
            v: v.clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthCommand {
    Grow,
    #[default]
    Hold,
    Retract,
}

impl GrowthCommand {
    pub fn code(self) -> char {
        match self {
            GrowthCommand::Grow => 'G',
            GrowthCommand::Hold => 'H',
            GrowthCommand::Retract => 'R',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "G" => Some(GrowthCommand::Grow),
            "H" => Some(GrowthCommand::Hold),
            "R" => Some(GrowthCommand::Retract),
            _ => None,
        }
    }
}

/// One command on the 66 Hz stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub t: f64,
    pub steer: SteerCommand,
    pub growth: GrowthCommand,
    pub gripper_angle: f64,
}

impl Command {
    /// The command that keeps everything where it is.
    pub fn safety(t: f64, previous: &Command) -> Self {
        Command {
            t,
            steer: previous.steer,
            growth: GrowthCommand::Hold,
            gripper_angle: previous.gripper_angle,
        }
    }
}

impl fmt::Display for Command {
    /// Command-log record: `t,u,v,growth,gripper_angle`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6},{:.6},{:.6},{},{:.6}",
            self.t,
            self.steer.u,
            self.steer.v,
            self.growth.code(),
            self.gripper_angle
        )
    }
}

/// Affine map of the reach box onto `[-1, 1]²`, clamped.
pub fn normalize_steer(x_wr: f64, z_wr: f64, profile: &CalibrationProfile) -> SteerCommand {
    let affine = |p: f64, lo: f64, hi: f64| 2.0 * (p - lo) / (hi - lo) - 1.0;
    SteerCommand::new(
        affine(x_wr, profile.x_left, profile.x_right),
        affine(z_wr, profile.z_back, profile.z_front),
    )
}

/// Arm raised above the deadband retracts, lowered below it grows. The
/// deadband is closed.
pub fn classify_growth(y_wr: f64, profile: &CalibrationProfile) -> GrowthCommand {
    if y_wr > profile.db_u {
        GrowthCommand::Retract
    } else if y_wr < profile.db_l {
        GrowthCommand::Grow
    } else {
        GrowthCommand::Hold
    }
}

pub fn gripper_command(theta_p: f64, profile: &CalibrationProfile) -> f64 {
    wrap_angle(theta_p - profile.theta_offset)
}

/// Maps wrist samples to commands. Keeps the last good gripper angle so a
/// briefly degenerate forearm projection does not interrupt the stream.
#[derive(Debug, Clone, Default)]
pub struct Interpreter {
    last_gripper: Option<(f64, f64)>,
}

impl Interpreter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interpret_wrist(
        &mut self,
        t: f64,
        wrist: &WristState,
        profile: &CalibrationProfile,
    ) -> Result<Command, InterpretError> {
        let (x, z) = transverse_coords(&wrist.wr);
        let gripper_angle = match wrist.theta_p {
            Ok(theta_p) => {
                let g = gripper_command(theta_p, profile);
                self.last_gripper = Some((t, g));
                g
            }
            Err(e) => match self.last_gripper {
                Some((since, g)) if t - since <= PRONATION_HOLD => g,
                Some((since, _)) => return Err(InterpretError::PronationLost(t - since)),
                None => return Err(e.into()),
            },
        };
        Ok(Command {
            t,
            steer: normalize_steer(x, z, profile),
            growth: classify_growth(wrist.y_wr, profile),
            gripper_angle,
        })
    }

    pub fn interpret(&mut self, body: &BodyFrame, profile: &CalibrationProfile) -> Result<Command, InterpretError> {
        let wrist = WristState::from_body(body)?;
        self.interpret_wrist(body.t, &wrist, profile)
    }

    /// Full pipeline from a raw motion-capture sample.
    pub fn interpret_markers(
        &mut self,
        frame: &MarkerFrame,
        profile: &CalibrationProfile,
    ) -> Result<Command, InterpretError> {
        let body = to_body(frame)?;
        self.interpret(&body, profile)
    }
}

/// Zero-order hold from the input stream onto the command grid.
#[derive(Debug, Clone, Default)]
pub struct Resampler {
    pending: VecDeque<Command>,
    latest: Option<Command>,
    emitted: Command,
}

impl Resampler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from `initial` as the held command (steer and gripper).
    pub fn with_initial(initial: Command) -> Self {
        Self {
            emitted: initial,
            ..Self::default()
        }
    }

    /// Queues an interpreted input. Inputs must arrive in time order.
    pub fn push(&mut self, cmd: Command) {
        self.pending.push_back(cmd);
    }

    pub fn last_emitted(&self) -> &Command {
        &self.emitted
    }

    /// Emits the command for grid instant `now`.
    pub fn tick(&mut self, now: f64) -> Command {
        while let Some(front) = self.pending.front() {
            if front.t > now + TIME_EPS {
                break;
            }
            self.latest = self.pending.pop_front();
        }
        let out = match self.latest {
            Some(c) if now - c.t <= STALE_AFTER + TIME_EPS => Command { t: now, ..c },
            _ => Command::safety(now, &self.emitted),
        };
        self.emitted = out;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MarkerLabel, Vec3};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn profile() -> CalibrationProfile {
        CalibrationProfile::from_limits((-0.30, 0.50), (-0.40, 0.20), (0.10, 0.50), 0.2)
    }

    #[test]
    fn steer_normalization() {
        let p = profile();
        let c = normalize_steer(0.10, 0.30, &p);
        assert_abs_diff_eq!(c.u, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.v, 0.0, epsilon = 1e-12);
        assert_eq!(normalize_steer(0.9, 0.3, &p).u, 1.0);
        assert_eq!(normalize_steer(-5.0, -5.0, &p), SteerCommand::new(-1.0, -1.0));
        assert_abs_diff_eq!(normalize_steer(0.5, 0.5, &p).u, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn growth_classification() {
        let p = profile();
        assert_abs_diff_eq!(p.db_l, -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p.db_u, 0.05, epsilon = 1e-12);
        assert_eq!(classify_growth(0.0, &p), GrowthCommand::Hold);
        assert_eq!(classify_growth(0.10, &p), GrowthCommand::Retract);
        assert_eq!(classify_growth(p.db_l, &p), GrowthCommand::Hold);
        assert_eq!(classify_growth(p.db_u, &p), GrowthCommand::Hold);
        assert_eq!(classify_growth(-0.3, &p), GrowthCommand::Grow);
    }

    #[test]
    fn gripper_offset() {
        let p = profile();
        assert_eq!(gripper_command(p.theta_offset, &p), 0.0);
        assert_abs_diff_eq!(gripper_command(p.theta_offset + PI / 2.0, &p), PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gripper_command(p.theta_offset - 1.5 * PI, &p), PI / 2.0, epsilon = 1e-12);
    }

    fn body_at(t: f64, wr: Vec3, theta_p: f64) -> MarkerFrame {
        let d = Vec3::new(theta_p.cos(), theta_p.sin(), 0.0) * 0.025;
        let elbow = wr + Vec3::new(0.0, 0.0, -0.25);
        MarkerFrame::new(t)
            .with(MarkerLabel::CH1, Vec3::zeros())
            .with(MarkerLabel::CH2, Vec3::new(0.2, 0.0, 0.0))
            .with(MarkerLabel::ABD, Vec3::new(0.05, -0.3, 0.0))
            .with(MarkerLabel::EL1, elbow - Vec3::new(0.03, 0.0, 0.0))
            .with(MarkerLabel::EL2, elbow + Vec3::new(0.03, 0.0, 0.0))
            .with(MarkerLabel::WR1, wr - d)
            .with(MarkerLabel::WR2, wr + d)
    }

    #[test]
    fn neutral_pose_gives_neutral_command() {
        let p = profile();
        let (cx, _, cz) = p.center();
        let mid_db = 0.5 * (p.db_l + p.db_u);
        let mut it = Interpreter::new();
        let c = it
            .interpret_markers(&body_at(0.5, Vec3::new(cx, mid_db, cz), p.theta_offset), &p)
            .unwrap();
        assert_abs_diff_eq!(c.steer.u, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.steer.v, 0.0, epsilon = 1e-12);
        assert_eq!(c.growth, GrowthCommand::Hold);
        assert_abs_diff_eq!(c.gripper_angle, 0.0, epsilon = 1e-12);
        assert_eq!(c.t, 0.5);
    }

    #[test]
    fn reach_corner_command() {
        let p = profile();
        let mut it = Interpreter::new();
        let c = it
            .interpret_markers(&body_at(0.0, Vec3::new(p.x_right, p.y_low, p.z_front), 1.0), &p)
            .unwrap();
        assert_abs_diff_eq!(c.steer.u, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.steer.v, 1.0, epsilon = 1e-12);
        assert_eq!(c.growth, GrowthCommand::Grow);
    }

    #[test]
    fn missing_wrist_marker() {
        let p = profile();
        let mut f = body_at(0.0, Vec3::new(0.1, 0.0, 0.3), 0.0);
        f.set(MarkerLabel::WR2, None);
        assert_eq!(
            Interpreter::new().interpret_markers(&f, &p).unwrap_err(),
            InterpretError::Geometry(GeometryError::MissingMarker(MarkerLabel::WR2))
        );
    }

    #[test]
    fn degenerate_pronation_holds_then_errors() {
        let p = profile();
        let mut it = Interpreter::new();
        let wr = Vec3::new(0.1, 0.0, 0.3);
        it.interpret_wrist(0.0, &WristState::new(wr, Ok(p.theta_offset + 0.5)), &p).unwrap();
        let lost = Err(GeometryError::DegenerateSegment { len: 0.0 });
        let c = it.interpret_wrist(0.2, &WristState::new(wr, lost), &p).unwrap();
        assert_abs_diff_eq!(c.gripper_angle, 0.5, epsilon = 1e-12);
        assert!(matches!(
            it.interpret_wrist(0.3, &WristState::new(wr, lost), &p),
            Err(InterpretError::PronationLost(_))
        ));
        // With no prior good angle the geometry error surfaces directly.
        assert!(matches!(
            Interpreter::new().interpret_wrist(0.0, &WristState::new(wr, lost), &p),
            Err(InterpretError::Geometry(GeometryError::DegenerateSegment { .. }))
        ));
    }

    fn input(t: f64, u: f64) -> Command {
        Command {
            t,
            steer: SteerCommand::new(u, 0.0),
            growth: GrowthCommand::Grow,
            gripper_angle: 0.3,
        }
    }

    #[test]
    fn resampler_uses_latest_input_at_or_before_tick() {
        let mut r = Resampler::new();
        for n in 0..10 {
            let t = n as f64 / 270.0;
            r.push(input(t, t));
        }
        let c = r.tick(tick_time(1));
        // 15.15 ms tick picks the 14.81 ms sample (n = 4).
        assert_abs_diff_eq!(c.steer.u, 4.0 / 270.0, epsilon = 1e-15);
        assert_eq!(c.t, tick_time(1));
    }

    #[test]
    fn resampler_coincident_input() {
        let mut r = Resampler::new();
        r.push(input(45.0 / 270.0, 0.7));
        let c = r.tick(tick_time(11));
        assert_eq!(c.steer.u, 0.7);
        assert_eq!(c.growth, GrowthCommand::Grow);
    }

    #[test]
    fn resampler_goes_safe_when_stale() {
        let mut r = Resampler::new();
        r.push(input(0.0, 0.5));
        assert_eq!(r.tick(tick_time(1)).growth, GrowthCommand::Grow);
        // 120 ms later with nothing new.
        let c = r.tick(0.120);
        assert_eq!(c.growth, GrowthCommand::Hold);
        assert_eq!(c.steer.u, 0.5);
        assert_eq!(c.gripper_angle, 0.3);
    }

    #[test]
    fn resampler_defers_future_inputs() {
        let mut r = Resampler::new();
        r.push(input(0.05, 0.9));
        let c = r.tick(tick_time(1));
        assert_eq!(c.growth, GrowthCommand::Hold);
        assert_eq!(r.tick(tick_time(4)).steer.u, 0.9);
    }

    #[test]
    fn command_log_line() {
        let c = Command {
            t: 1.0 / 66.0,
            steer: SteerCommand::new(-0.25, 1.0),
            growth: GrowthCommand::Retract,
            gripper_angle: -PI / 4.0,
        };
        assert_eq!(c.to_string(), "0.015152,-0.250000,1.000000,R,-0.785398");
    }

    proptest! {
        #[test]
        fn steer_stays_in_unit_square(x in -10.0..10.0f64, z in -10.0..10.0f64) {
            let c = normalize_steer(x, z, &profile());
            prop_assert!(c.u.abs() <= 1.0 && c.v.abs() <= 1.0);
        }

        #[test]
        fn growth_is_monotone(ys in proptest::collection::vec(-1.0..1.0f64, 2..50)) {
            let p = profile();
            let mut ys = ys;
            ys.sort_by(f64::total_cmp);
            let rank = |g| match g { GrowthCommand::Grow => 0, GrowthCommand::Hold => 1, GrowthCommand::Retract => 2 };
            let ranks: Vec<_> = ys.iter().map(|&y| rank(classify_growth(y, &p))).collect();
            prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
