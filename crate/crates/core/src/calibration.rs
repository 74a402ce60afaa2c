//! Per-operator calibration: reach limits, growth deadband and pronation offset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, wrist_centroid, BodyFrame, MarkerLabel, WristState};

/// Smallest accepted reach span on any axis (m).
pub const MIN_SPAN: f64 = 0.10;
/// Smallest accepted calibration duration (s).
pub const MIN_DURATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("no neutral pose captured")]
    NoNeutral,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Calibrated reach box, deadband and pronation offset, all in the operator frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub x_left: f64,
    pub x_right: f64,
    pub z_back: f64,
    pub z_front: f64,
    pub y_low: f64,
    pub y_high: f64,
    pub db_l: f64,
    pub db_u: f64,
    pub theta_offset: f64,
}

impl CalibrationProfile {
    /// Builds a profile from reach limits, deriving the deadband as the
    /// central half of the vertical span.
    pub fn from_limits(
        (x_left, x_right): (f64, f64),
        (y_low, y_high): (f64, f64),
        (z_back, z_front): (f64, f64),
        theta_offset: f64,
    ) -> Self {
        let (db_l, db_u) = deadband(y_low, y_high);
        Self {
            x_left,
            x_right,
            z_back,
            z_front,
            y_low,
            y_high,
            db_l,
            db_u,
            theta_offset,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidProfile(m.to_string()));
        let vals = [
            self.x_left,
            self.x_right,
            self.z_back,
            self.z_front,
            self.y_low,
            self.y_high,
            self.db_l,
            self.db_u,
            self.theta_offset,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field");
        }
        for (lo, hi, name) in [
            (self.x_left, self.x_right, "x"),
            (self.z_back, self.z_front, "z"),
            (self.y_low, self.y_high, "y"),
        ] {
            if hi - lo < MIN_SPAN {
                return bad(&format!("{name} span {:.3} m below {MIN_SPAN} m", hi - lo));
            }
        }
        if !(self.db_l < self.db_u && self.y_low <= self.db_l && self.db_u <= self.y_high) {
            return bad("deadband outside vertical reach");
        }
        if ((self.db_u - self.db_l) - (self.y_high - self.y_low) / 2.0).abs() > 1e-9 {
            return bad("deadband width is not half the vertical span");
        }
        Ok(())
    }

    /// Reach box centre, used as the neutral wrist position.
    pub fn center(&self) -> (f64, f64, f64) {
        (
            0.5 * (self.x_left + self.x_right),
            0.5 * (self.y_low + self.y_high),
            0.5 * (self.z_back + self.z_front),
        )
    }
}

impl Default for CalibrationProfile {
    /// A symmetric 0.6 m reach box centred on the origin.
    fn default() -> Self {
        Self::from_limits((-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3), 0.0)
    }
}

/// Deadband centred on the vertical midpoint with half the span's width.
pub fn deadband(y_low: f64, y_high: f64) -> (f64, f64) {
    let mid = 0.5 * (y_low + y_high);
    let quarter = 0.25 * (y_high - y_low);
    (mid - quarter, mid + quarter)
}

/// Running extents of the wrist centroid during a calibration sweep.
#[derive(Debug, Clone, Default)]
pub struct CalibrationSession {
    min: [f64; 3],
    max: [f64; 3],
    count: usize,
    first_t: f64,
    last_t: f64,
    neutral_theta: Option<f64>,
}

impl CalibrationSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn extents(&self) -> Option<([f64; 3], [f64; 3])> {
        (self.count > 0).then_some((self.min, self.max))
    }

    /// Accumulates one wrist sample taken at time `t`.
    pub fn feed(&mut self, t: f64, wrist: &WristState) {
        let p = [wrist.x_wr, wrist.y_wr, wrist.z_wr];
        if self.count == 0 {
            self.min = p;
            self.max = p;
            self.first_t = t;
            self.last_t = t;
        } else {
            for i in 0..3 {
                self.min[i] = self.min[i].min(p[i]);
                self.max[i] = self.max[i].max(p[i]);
            }
            self.first_t = self.first_t.min(t);
            self.last_t = self.last_t.max(t);
        }
        self.count += 1;
    }

    /// Feeds the wrist centroid of an operator-frame sample. Frames without
    /// both wrist markers are skipped; returns whether the frame was used.
    pub fn feed_body(&mut self, body: &BodyFrame) -> bool {
        match (body.get(MarkerLabel::WR1), body.get(MarkerLabel::WR2)) {
            (Some(a), Some(b)) => {
                let wr = wrist_centroid(a, b);
                self.feed(body.t, &WristState::new(wr, Ok(0.0)));
                true
            }
            _ => false,
        }
    }

    /// Records the pronation angle of the neutral pose.
    pub fn capture_neutral(&mut self, theta_p: f64) {
        self.neutral_theta = Some(theta_p);
    }

    pub fn finalize(&self, robot_start_gripper: f64) -> Result<CalibrationProfile, CalibrationError> {
        if self.count == 0 {
            return Err(CalibrationError::InsufficientCoverage("no frames".into()));
        }
        let duration = self.last_t - self.first_t;
        if duration < MIN_DURATION {
            return Err(CalibrationError::InsufficientCoverage(format!(
                "{duration:.3} s of frames, need {MIN_DURATION} s"
            )));
        }
        for (i, axis) in ["x", "y", "z"].iter().enumerate() {
            let span = self.max[i] - self.min[i];
            if span < MIN_SPAN {
                return Err(CalibrationError::InsufficientCoverage(format!(
                    "{axis} span {span:.3} m, need {MIN_SPAN} m"
                )));
            }
        }
        let neutral = self.neutral_theta.ok_or(CalibrationError::NoNeutral)?;
        let profile = CalibrationProfile::from_limits(
            (self.min[0], self.max[0]),
            (self.min[1], self.max[1]),
            (self.min[2], self.max[2]),
            wrap_angle(neutral - robot_start_gripper),
        );
        profile.validate()?;
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn wrist(x: f64, y: f64, z: f64) -> WristState {
        WristState::new(Vec3::new(x, y, z), Ok(0.0))
    }

    fn sweep(session: &mut CalibrationSession) {
        // Corners of a box; the y range is [-0.40, 0.20].
        let pts = [
            (-0.30, -0.40, 0.10),
            (0.40, 0.20, 0.50),
            (0.0, -0.1, 0.3),
        ];
        for (i, (x, y, z)) in pts.into_iter().enumerate() {
            session.feed(i as f64 * 0.6, &wrist(x, y, z));
        }
    }

    #[test]
    fn single_sample_extents() {
        let mut s = CalibrationSession::new();
        s.feed(0.0, &wrist(0.1, -0.2, 0.0));
        assert_eq!(s.extents(), Some(([0.1, -0.2, 0.0], [0.1, -0.2, 0.0])));
    }

    #[test]
    fn running_min_max() {
        let mut s = CalibrationSession::new();
        for (i, x) in [-0.30, 0.0, 0.40].into_iter().enumerate() {
            s.feed(i as f64, &wrist(x, 0.0, 0.0));
        }
        let (lo, hi) = s.extents().unwrap();
        assert_eq!((lo[0], hi[0]), (-0.30, 0.40));
    }

    #[test]
    fn empty_session_is_insufficient() {
        assert!(matches!(
            CalibrationSession::new().finalize(0.0),
            Err(CalibrationError::InsufficientCoverage(_))
        ));
    }

    #[test]
    fn short_or_narrow_session_is_insufficient() {
        let mut s = CalibrationSession::new();
        s.capture_neutral(0.0);
        s.feed(0.0, &wrist(-0.3, -0.3, -0.3));
        s.feed(0.5, &wrist(0.3, 0.3, 0.3));
        assert!(matches!(s.finalize(0.0), Err(CalibrationError::InsufficientCoverage(_))));

        let mut s = CalibrationSession::new();
        s.capture_neutral(0.0);
        s.feed(0.0, &wrist(-0.3, -0.3, 0.0));
        s.feed(2.0, &wrist(0.3, 0.3, 0.05));
        assert!(matches!(s.finalize(0.0), Err(CalibrationError::InsufficientCoverage(_))));
    }

    #[test]
    fn missing_neutral() {
        let mut s = CalibrationSession::new();
        sweep(&mut s);
        assert_eq!(s.finalize(0.0), Err(CalibrationError::NoNeutral));
    }

    #[test]
    fn deadband_from_vertical_span() {
        let mut s = CalibrationSession::new();
        sweep(&mut s);
        s.capture_neutral(0.4);
        let p = s.finalize(0.1).unwrap();
        assert_eq!((p.x_left, p.x_right), (-0.30, 0.40));
        assert_eq!((p.z_back, p.z_front), (0.10, 0.50));
        assert_abs_diff_eq!(p.db_l, -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p.db_u, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta_offset, 0.3, epsilon = 1e-12);

        let (l, u) = deadband(-0.30, 0.30);
        assert_abs_diff_eq!(l, -0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn offset_is_wrapped() {
        let mut s = CalibrationSession::new();
        sweep(&mut s);
        s.capture_neutral(3.0);
        let p = s.finalize(-3.0).unwrap();
        assert_abs_diff_eq!(p.theta_offset, 6.0 - 2.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    fn arb_samples() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        proptest::collection::vec((-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64), 2..40)
    }

    proptest! {
        #[test]
        fn finalized_profiles_are_valid_and_order_free(mut pts in arb_samples(), extra in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)) {
            // Guarantee coverage with two anchor samples.
            pts.push((-0.5, -0.5, -0.5));
            pts.push((0.5, 0.5, 0.5));
            let build = |pts: &[(f64, f64, f64)]| {
                let mut s = CalibrationSession::new();
                s.capture_neutral(0.2);
                for (i, &(x, y, z)) in pts.iter().enumerate() {
                    s.feed(i as f64 * 0.5, &wrist(x, y, z));
                }
                s.finalize(0.0)
            };
            let fwd = build(&pts).unwrap();
            prop_assert!(fwd.validate().is_ok());
            let mut rev = pts.clone();
            rev.reverse();
            prop_assert_eq!(build(&rev).unwrap(), fwd);
            // An interior sample leaves the profile unchanged.
            let (ax, ay, az) = extra;
            let inner = (fwd.x_left + ax * (fwd.x_right - fwd.x_left),
                         fwd.y_low + ay * (fwd.y_high - fwd.y_low),
                         fwd.z_back + az * (fwd.z_front - fwd.z_back));
            let mut more = pts.clone();
            more.insert(1, inner);
            prop_assert_eq!(build(&more).unwrap(), fwd);
        }
    }
}
