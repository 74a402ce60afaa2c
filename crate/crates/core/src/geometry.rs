//! Vector and frame math for the body interface.
//!
//! Motion-capture samples are re-expressed in an operator-centred frame fitted
//! to the three chest markers, so the interpreted gestures do not depend on
//! where the operator stands or which way they face.
//!
//! Operator axes:
//! * `x` points from CH1 toward CH2 (lateral),
//! * `y` lies in the chest plane and points away from ABD (up),
//! * `z = x × y` points out of the chest (anterior).

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or direction in meters.
pub type Vec3 = Vector3<f64>;

/// Minimum chest-triangle area (m²) below which the markers are considered collinear.
pub const MIN_CHEST_AREA: f64 = 1e-8;
/// Minimum length (m) of a segment projected onto the coronal plane.
pub const MIN_SEGMENT_LEN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("chest markers are coincident or collinear (area {area:e} m²)")]
    DegenerateMarkers { area: f64 },
    #[error("marker {0} is not visible")]
    MissingMarker(MarkerLabel),
    #[error("projected segment too short ({len:e} m)")]
    DegenerateSegment { len: f64 },
}

/// The seven tracked body markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarkerLabel {
    EL1,
    EL2,
    WR1,
    WR2,
    CH1,
    CH2,
    ABD,
}

impl MarkerLabel {
    pub const ALL: [MarkerLabel; 7] = [
        MarkerLabel::EL1,
        MarkerLabel::EL2,
        MarkerLabel::WR1,
        MarkerLabel::WR2,
        MarkerLabel::CH1,
        MarkerLabel::CH2,
        MarkerLabel::ABD,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MarkerLabel::EL1 => "EL1",
            MarkerLabel::EL2 => "EL2",
            MarkerLabel::WR1 => "WR1",
            MarkerLabel::WR2 => "WR2",
            MarkerLabel::CH1 => "CH1",
            MarkerLabel::CH2 => "CH2",
            MarkerLabel::ABD => "ABD",
        }
    }

    pub fn parse(s: &str) -> Option<MarkerLabel> {
        MarkerLabel::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for MarkerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A proper rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax() <= tol;
        ortho && (r.determinant() - 1.0).abs() <= tol
    }
}

/// Fits the operator frame to the chest markers and returns the transform
/// taking motion-capture coordinates into it.
pub fn fit_body_frame(ch1: &Vec3, ch2: &Vec3, abd: &Vec3) -> Result<RigidTransform, GeometryError> {
    let lateral = ch2 - ch1;
    let down = abd - ch1;
    let area = 0.5 * lateral.cross(&down).norm();
    if !(area > MIN_CHEST_AREA) {
        return Err(GeometryError::DegenerateMarkers { area });
    }
    let x = lateral.normalize();
    // Component of CH1→ABD orthogonal to x, flipped so that +y points away from the abdomen.
    let y = -(down - x * x.dot(&down)).normalize();
    let z = x.cross(&y);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Ok(RigidTransform {
        rotation,
        translation: -(rotation * ch1),
    })
}

/// One timestamped motion-capture sample; `None` marks an occluded marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrame {
    pub t: f64,
    pub markers: [Option<Vec3>; 7],
}

impl MarkerFrame {
    pub fn new(t: f64) -> Self {
        Self { t, markers: [None; 7] }
    }

    pub fn with(mut self, label: MarkerLabel, p: Vec3) -> Self {
        self.markers[label.index()] = Some(p);
        self
    }

    pub fn get(&self, label: MarkerLabel) -> Option<&Vec3> {
        self.markers[label.index()].as_ref()
    }

    pub fn set(&mut self, label: MarkerLabel, p: Option<Vec3>) {
        self.markers[label.index()] = p;
    }

    pub fn require(&self, label: MarkerLabel) -> Result<&Vec3, GeometryError> {
        self.get(label).ok_or(GeometryError::MissingMarker(label))
    }

    /// All visible positions are finite.
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self
                .markers
                .iter()
                .flatten()
                .all(|p| p.iter().all(|c| c.is_finite()))
    }

    /// Applies `tf` to every visible marker.
    pub fn transformed(&self, tf: &RigidTransform) -> MarkerFrame {
        let mut out = self.clone();
        for p in out.markers.iter_mut().flatten() {
            *p = tf.apply(p);
        }
        out
    }
}

/// A marker sample expressed in the operator frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyFrame {
    pub t: f64,
    pub markers: [Option<Vec3>; 7],
    pub transform: RigidTransform,
}

impl BodyFrame {
    pub fn get(&self, label: MarkerLabel) -> Option<&Vec3> {
        self.markers[label.index()].as_ref()
    }

    pub fn require(&self, label: MarkerLabel) -> Result<&Vec3, GeometryError> {
        self.get(label).ok_or(GeometryError::MissingMarker(label))
    }
}

pub fn to_body(frame: &MarkerFrame) -> Result<BodyFrame, GeometryError> {
    let ch1 = frame.require(MarkerLabel::CH1)?;
    let ch2 = frame.require(MarkerLabel::CH2)?;
    let abd = frame.require(MarkerLabel::ABD)?;
    let transform = fit_body_frame(ch1, ch2, abd)?;
    let moved = frame.transformed(&transform);
    Ok(BodyFrame {
        t: frame.t,
        markers: moved.markers,
        transform,
    })
}

pub fn wrist_centroid(wr1: &Vec3, wr2: &Vec3) -> Vec3 {
    (wr1 + wr2) * 0.5
}

/// Projection onto the operator's transverse (x–z) plane.
pub fn transverse_coords(wr: &Vec3) -> (f64, f64) {
    (wr.x, wr.z)
}

/// Signed angle, counter-clockwise about +z, from the elbow segment EL1→EL2
/// to the wrist segment WR1→WR2, both projected onto the coronal (x–y) plane.
pub fn pronation_angle(el1: &Vec3, el2: &Vec3, wr1: &Vec3, wr2: &Vec3) -> Result<f64, GeometryError> {
    let (ex, ey) = (el2.x - el1.x, el2.y - el1.y);
    let (wx, wy) = (wr2.x - wr1.x, wr2.y - wr1.y);
    for len in [ex.hypot(ey), wx.hypot(wy)] {
        if !(len >= MIN_SEGMENT_LEN) {
            return Err(GeometryError::DegenerateSegment { len });
        }
    }
    let cross = ex * wy - ey * wx;
    let dot = ex * wx + ey * wy;
    Ok(wrap_angle(cross.atan2(dot)))
}

/// Wrist quantities used by the command mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WristState {
    pub wr: Vec3,
    pub x_wr: f64,
    pub y_wr: f64,
    pub z_wr: f64,
    /// `Err` when the forearm projection is degenerate.
    pub theta_p: Result<f64, GeometryError>,
}

impl WristState {
    pub fn new(wr: Vec3, theta_p: Result<f64, GeometryError>) -> Self {
        Self {
            wr,
            x_wr: wr.x,
            y_wr: wr.y,
            z_wr: wr.z,
            theta_p,
        }
    }

    /// Extracts wrist position and pronation from an operator-frame sample.
    pub fn from_body(body: &BodyFrame) -> Result<Self, GeometryError> {
        let wr1 = body.require(MarkerLabel::WR1)?;
        let wr2 = body.require(MarkerLabel::WR2)?;
        let el1 = body.require(MarkerLabel::EL1)?;
        let el2 = body.require(MarkerLabel::EL2)?;
        Ok(Self::new(
            wrist_centroid(wr1, wr2),
            pronation_angle(el1, el2, wr1, wr2),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn canonical_chest_gives_identity() {
        let tf = fit_body_frame(&v(0.0, 0.0, 0.0), &v(0.2, 0.0, 0.0), &v(0.05, -0.3, 0.0)).unwrap();
        assert_abs_diff_eq!(tf.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(tf.translation, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn translated_chest_gives_pure_translation() {
        let o = v(1.0, 2.0, 3.0);
        let (a, b, c) = (o, v(0.2, 0.0, 0.0) + o, v(0.05, -0.3, 0.0) + o);
        let tf = fit_body_frame(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(tf.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(tf.translation, v(-1.0, -2.0, -3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(tf.apply(&a), Vec3::zeros(), epsilon = 1e-12);
        assert_abs_diff_eq!(tf.apply(&b), v(0.2, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(tf.apply(&c), v(0.05, -0.3, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn coincident_or_collinear_chest_is_rejected() {
        let o = Vec3::zeros();
        assert!(matches!(
            fit_body_frame(&o, &o, &v(0.05, -0.3, 0.0)),
            Err(GeometryError::DegenerateMarkers { .. })
        ));
        assert!(matches!(
            fit_body_frame(&o, &v(0.1, 0.0, 0.0), &v(0.3, 0.0, 0.0)),
            Err(GeometryError::DegenerateMarkers { .. })
        ));
    }

    #[test]
    fn missing_chest_marker() {
        let f = MarkerFrame::new(0.0)
            .with(MarkerLabel::CH1, Vec3::zeros())
            .with(MarkerLabel::ABD, v(0.05, -0.3, 0.0));
        assert_eq!(
            to_body(&f).unwrap_err(),
            GeometryError::MissingMarker(MarkerLabel::CH2)
        );
    }

    #[test]
    fn canonical_frame_is_unchanged() {
        let f = MarkerFrame::new(1.5)
            .with(MarkerLabel::CH1, Vec3::zeros())
            .with(MarkerLabel::CH2, v(0.2, 0.0, 0.0))
            .with(MarkerLabel::ABD, v(0.05, -0.3, 0.0))
            .with(MarkerLabel::WR1, v(0.3, -0.1, 0.4));
        let b = to_body(&f).unwrap();
        for l in MarkerLabel::ALL {
            match (f.get(l), b.get(l)) {
                (Some(p), Some(q)) => assert_abs_diff_eq!(p, q, epsilon = 1e-12),
                (None, None) => {}
                _ => panic!("visibility changed for {l}"),
            }
        }
        assert_eq!(b.t, 1.5);
    }

    #[test]
    fn centroid_and_projection() {
        assert_eq!(wrist_centroid(&Vec3::zeros(), &Vec3::zeros()), Vec3::zeros());
        assert_eq!(wrist_centroid(&v(1.0, 0.0, 0.0), &v(0.0, 1.0, 0.0)), v(0.5, 0.5, 0.0));
        assert_abs_diff_eq!(
            wrist_centroid(&v(0.1, 0.2, 0.3), &v(0.3, 0.2, 0.1)),
            v(0.2, 0.2, 0.2),
            epsilon = 1e-15
        );
        assert_eq!(transverse_coords(&v(0.2, -0.1, 0.3)), (0.2, 0.3));
        assert_eq!(transverse_coords(&Vec3::zeros()), (0.0, 0.0));
        assert_eq!(transverse_coords(&v(-0.3, 0.5, 0.1)), (-0.3, 0.1));
    }

    #[test]
    fn pronation_examples() {
        let o = Vec3::zeros();
        assert_eq!(pronation_angle(&o, &v(1.0, 0.0, 0.0), &o, &v(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            pronation_angle(&o, &v(1.0, 0.0, 0.0), &o, &v(0.0, 1.0, 0.0)).unwrap(),
            PI / 2.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            pronation_angle(&o, &v(1.0, 0.0, 0.0), &o, &v(0.0, 0.0, 1.0)),
            Err(GeometryError::DegenerateSegment { .. })
        ));
        // Anti-parallel resolves to +π, never −π.
        assert_eq!(pronation_angle(&o, &v(1.0, 0.0, 0.0), &o, &v(-1.0, 0.0, 0.0)).unwrap(), PI);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(-1.5 * PI), 0.5 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(7.0), 7.0 - 2.0 * PI, epsilon = 1e-15);
    }

    fn arb_vec(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| v(x, y, z))
    }

    fn arb_rigid() -> impl Strategy<Value = RigidTransform> {
        (arb_vec(1.0), 0.0..PI, arb_vec(3.0)).prop_filter_map("axis", |(axis, angle, t)| {
            let axis = Unit::try_new(axis, 1e-3)?;
            Some(RigidTransform::new(
                *Rotation3::from_axis_angle(&axis, angle).matrix(),
                t,
            ))
        })
    }

    proptest! {
        #[test]
        fn fitted_transform_is_proper(ch1 in arb_vec(2.0), ch2 in arb_vec(2.0), abd in arb_vec(2.0)) {
            if let Ok(tf) = fit_body_frame(&ch1, &ch2, &abd) {
                prop_assert!(tf.is_proper(1e-9));
                let a = tf.apply(&ch1);
                let b = tf.apply(&ch2);
                let c = tf.apply(&abd);
                prop_assert!(a.norm() < 1e-9);
                prop_assert!(b.y.abs() < 1e-9 && b.z.abs() < 1e-9 && b.x > 0.0);
                prop_assert!(c.z.abs() < 1e-9 && c.y < 0.0);
            }
        }

        #[test]
        fn body_frame_is_pose_independent(
            tf in arb_rigid(),
            pts in proptest::collection::vec(arb_vec(0.6), 4),
        ) {
            let f = MarkerFrame::new(0.0)
                .with(MarkerLabel::CH1, Vec3::zeros())
                .with(MarkerLabel::CH2, v(0.22, 0.01, 0.0))
                .with(MarkerLabel::ABD, v(0.04, -0.31, 0.02))
                .with(MarkerLabel::EL1, pts[0])
                .with(MarkerLabel::EL2, pts[1])
                .with(MarkerLabel::WR1, pts[2])
                .with(MarkerLabel::WR2, pts[3]);
            let a = to_body(&f).unwrap();
            let b = to_body(&f.transformed(&tf)).unwrap();
            for l in MarkerLabel::ALL {
                prop_assert!((a.get(l).unwrap() - b.get(l).unwrap()).amax() < 1e-9);
            }
        }

        #[test]
        fn pronation_is_antisymmetric(e in arb_vec(1.0), w in arb_vec(1.0)) {
            let o = Vec3::zeros();
            if let (Ok(ab), Ok(ba)) = (pronation_angle(&o, &e, &o, &w), pronation_angle(&o, &w, &o, &e)) {
                prop_assert!(wrap_angle(ab + ba).abs() < 1e-12 || (wrap_angle(ab + ba) - 2.0 * PI).abs() < 1e-12);
            }
        }

        #[test]
        fn centroid_is_symmetric(a in arb_vec(5.0), b in arb_vec(5.0)) {
            prop_assert_eq!(wrist_centroid(&a, &b), wrist_centroid(&b, &a));
        }
    }
}
