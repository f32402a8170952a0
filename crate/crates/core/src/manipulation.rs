//! Manipulation constraint f(s): SE(3) hand path(s) parameterized by the
//! progression variable s in [0, 1], plus the bundled door-hinge and
//! cart-push generators and the waypoint-file format.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use thiserror::Error;

use crate::geometry::{slerp, FramePose};
use crate::Side;

#[derive(Debug, Error)]
pub enum ManipulationError {
    #[error("progression value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("direction vector must be non-zero")]
    ZeroDirection,
    #[error("push length must be non-negative, got {0}")]
    BadLength(f64),
    #[error("invalid waypoints: {0}")]
    BadWaypoints(String),
    #[error("waypoint file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which hand(s) the path constrains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManipulationType {
    LeftHand,
    RightHand,
    BothHands,
}

impl ManipulationType {
    pub fn uses(&self, side: Side) -> bool {
        matches!(
            (self, side),
            (ManipulationType::LeftHand, Side::Left)
                | (ManipulationType::RightHand, Side::Right)
                | (ManipulationType::BothHands, _)
        )
    }

    /// Scalar encoding used by the classifier features.
    pub fn encoding(&self) -> f64 {
        match self {
            ManipulationType::LeftHand => 0.0,
            ManipulationType::BothHands => 0.5,
            ManipulationType::RightHand => 1.0,
        }
    }
}

impl std::fmt::Display for ManipulationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManipulationType::LeftHand => write!(f, "left"),
            ManipulationType::RightHand => write!(f, "right"),
            ManipulationType::BothHands => write!(f, "both"),
        }
    }
}

/// Hand target(s) at a given s.
#[derive(Clone, Copy, Debug)]
pub struct HandTargets {
    pub left: Option<FramePose>,
    pub right: Option<FramePose>,
}

impl HandTargets {
    pub fn get(&self, side: Side) -> Option<FramePose> {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

/// Waypoint list for one hand: strictly increasing s from 0 to 1; linear
/// position and shortest-arc slerp orientation between waypoints.
#[derive(Clone, Debug)]
pub struct Waypoints {
    points: Vec<(f64, FramePose)>,
}

impl Waypoints {
    pub fn new(points: Vec<(f64, FramePose)>) -> Result<Self, ManipulationError> {
        if points.len() < 2 {
            return Err(ManipulationError::BadWaypoints("need at least two waypoints".into()));
        }
        if points[0].0 != 0.0 || points.last().unwrap().0 != 1.0 {
            return Err(ManipulationError::BadWaypoints("s must start at 0 and end at 1".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ManipulationError::BadWaypoints("s must be strictly increasing".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn constant(pose: FramePose) -> Self {
        Self { points: vec![(0.0, pose), (1.0, pose)] }
    }

    pub fn evaluate(&self, s: f64) -> FramePose {
        let idx = self
            .points
            .windows(2)
            .position(|w| s <= w[1].0)
            .unwrap_or(self.points.len() - 2);
        let (s0, a) = self.points[idx];
        let (s1, b) = self.points[idx + 1];
        let u = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        FramePose::new(
            a.position + (b.position - a.position) * u,
            slerp(&a.orientation, &b.orientation, u),
        )
    }

    pub fn points(&self) -> &[(f64, FramePose)] {
        &self.points
    }
}

/// The path geometry. Generator paths keep their exact parametric form;
/// file-loaded paths use waypoint interpolation.
#[derive(Clone, Debug)]
enum PathShape {
    /// Independent waypoint tracks (second entry for the off hand of a
    /// bimanual path).
    Waypoints { primary: Waypoints, secondary: Option<Waypoints> },
    /// Circular arc about the hinge frame's z-axis: the handle stays at
    /// `radius` from the axis and rotates with the door.
    DoorArc { hinge: Isometry3<f64>, radius: f64, angle_range: f64 },
    /// Rigid bimanual translation along a fixed direction.
    CartPush { left0: FramePose, right0: FramePose, direction: UnitVector3<f64>, length: f64 },
}

/// The manipulation constraint f(s) for one or two hands.
#[derive(Clone, Debug)]
pub struct ManipulationPath {
    manipulation_type: ManipulationType,
    shape: PathShape,
}

impl ManipulationPath {
    pub fn from_waypoints(
        manipulation_type: ManipulationType,
        primary: Waypoints,
        secondary: Option<Waypoints>,
    ) -> Result<Self, ManipulationError> {
        if manipulation_type == ManipulationType::BothHands && secondary.is_none() {
            return Err(ManipulationError::BadWaypoints(
                "both-hands paths need a second waypoint track".into(),
            ));
        }
        Ok(Self { manipulation_type, shape: PathShape::Waypoints { primary, secondary } })
    }

    /// A single-hand path holding one fixed pose for all s.
    pub fn fixed_pose(manipulation_type: ManipulationType, pose: FramePose) -> Self {
        let secondary = (manipulation_type == ManipulationType::BothHands)
            .then(|| Waypoints::constant(pose));
        Self {
            manipulation_type,
            shape: PathShape::Waypoints { primary: Waypoints::constant(pose), secondary },
        }
    }

    /// Bimanual path holding two fixed poses for all s.
    pub fn fixed_pose_bimanual(left: FramePose, right: FramePose) -> Self {
        Self {
            manipulation_type: ManipulationType::BothHands,
            shape: PathShape::Waypoints {
                primary: Waypoints::constant(left),
                secondary: Some(Waypoints::constant(right)),
            },
        }
    }

    pub fn manipulation_type(&self) -> ManipulationType {
        self.manipulation_type
    }

    /// Evaluate f(s). Returns two poses iff the type is both-hands.
    pub fn evaluate(&self, s: f64) -> Result<HandTargets, ManipulationError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ManipulationError::OutOfRange(s));
        }
        let (primary, secondary) = match &self.shape {
            PathShape::Waypoints { primary, secondary } => {
                (primary.evaluate(s), secondary.as_ref().map(|w| w.evaluate(s)))
            }
            PathShape::DoorArc { hinge, radius, angle_range } => {
                let theta = s * angle_range;
                let pose = hinge
                    * Isometry3::from_parts(
                        Translation3::identity(),
                        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta),
                    )
                    * Isometry3::translation(*radius, 0.0, 0.0);
                (FramePose::from_isometry(&pose), None)
            }
            PathShape::CartPush { left0, right0, direction, length } => {
                let shift = direction.into_inner() * (length * s);
                (
                    FramePose::new(left0.position + shift, left0.orientation),
                    Some(FramePose::new(right0.position + shift, right0.orientation)),
                )
            }
        };
        Ok(match self.manipulation_type {
            ManipulationType::LeftHand => HandTargets { left: Some(primary), right: None },
            ManipulationType::RightHand => HandTargets { left: None, right: Some(primary) },
            ManipulationType::BothHands => HandTargets { left: Some(primary), right: secondary },
        })
    }

    /// Ground-plane projection of the primary hand target at s, used by the
    /// planner's reachability pruning and suggested body path.
    pub fn ground_projection(&self, s: f64) -> Result<FramePose, ManipulationError> {
        let targets = self.evaluate(s)?;
        let pose = match (targets.left, targets.right) {
            (Some(l), Some(r)) => FramePose::new(
                (l.position + r.position) * 0.5,
                slerp(&l.orientation, &r.orientation, 0.5),
            ),
            (Some(p), None) | (None, Some(p)) => p,
            (None, None) => unreachable!("path constrains at least one hand"),
        };
        Ok(FramePose::from_xy_yaw(pose.position.x, pose.position.y, pose.yaw()))
    }

    /// Resample to a waypoint representation (e.g. for file export).
    pub fn to_waypoints(&self, count: usize) -> Result<Self, ManipulationError> {
        let count = count.max(2);
        let mut primary = Vec::with_capacity(count);
        let mut secondary = Vec::with_capacity(count);
        for i in 0..count {
            let s = i as f64 / (count - 1) as f64;
            let t = self.evaluate(s)?;
            let (p, sec) = match self.manipulation_type {
                ManipulationType::LeftHand => (t.left.unwrap(), None),
                ManipulationType::RightHand => (t.right.unwrap(), None),
                ManipulationType::BothHands => (t.left.unwrap(), t.right),
            };
            primary.push((s, p));
            if let Some(sp) = sec {
                secondary.push((s, sp));
            }
        }
        let secondary =
            (!secondary.is_empty()).then(|| Waypoints::new(secondary)).transpose()?;
        Ok(Self {
            manipulation_type: self.manipulation_type,
            shape: PathShape::Waypoints { primary: Waypoints::new(primary)?, secondary },
        })
    }

    /// Columnar waypoint-file serialization.
    pub fn to_file_string(&self, samples: usize) -> Result<String, ManipulationError> {
        let wp = self.to_waypoints(samples)?;
        let mut out = format!("type {}\n", self.manipulation_type);
        out.push_str("# s x y z qw qx qy qz [x2 y2 z2 qw2 qx2 qy2 qz2]\n");
        if let PathShape::Waypoints { primary, secondary } = &wp.shape {
            for (i, (s, pose)) in primary.points().iter().enumerate() {
                let fmt_pose = |p: &FramePose| {
                    let q = p.orientation.quaternion();
                    format!(
                        "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                        p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k
                    )
                };
                match secondary {
                    Some(sec) => out.push_str(&format!(
                        "{:.9} {} {}\n",
                        s,
                        fmt_pose(pose),
                        fmt_pose(&sec.points()[i].1)
                    )),
                    None => out.push_str(&format!("{:.9} {}\n", s, fmt_pose(pose))),
                }
            }
        }
        Ok(out)
    }

    /// Parse the waypoint-file format written by [`Self::to_file_string`].
    pub fn from_file_string(text: &str) -> Result<Self, ManipulationError> {
        let mut manipulation_type = None;
        let mut primary = Vec::new();
        let mut secondary = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("type ") {
                manipulation_type = Some(match rest.trim() {
                    "left" => ManipulationType::LeftHand,
                    "right" => ManipulationType::RightHand,
                    "both" => ManipulationType::BothHands,
                    other => {
                        return Err(ManipulationError::Parse {
                            line: lineno,
                            msg: format!("unknown manipulation type '{other}'"),
                        })
                    }
                });
                continue;
            }
            let vals: Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|e| ManipulationError::Parse {
                line: lineno,
                msg: format!("bad number: {e}"),
            })?;
            if vals.len() != 8 && vals.len() != 15 {
                return Err(ManipulationError::Parse {
                    line: lineno,
                    msg: format!("expected 8 or 15 columns, got {}", vals.len()),
                });
            }
            let pose_at = |o: usize| {
                FramePose::new(
                    Vector3::new(vals[o], vals[o + 1], vals[o + 2]),
                    UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
                        vals[o + 3],
                        vals[o + 4],
                        vals[o + 5],
                        vals[o + 6],
                    )),
                )
            };
            primary.push((vals[0], pose_at(1)));
            if vals.len() == 15 {
                secondary.push((vals[0], pose_at(8)));
            }
        }
        let manipulation_type = manipulation_type.ok_or(ManipulationError::Parse {
            line: 0,
            msg: "missing 'type' header".into(),
        })?;
        let secondary = (!secondary.is_empty()).then(|| Waypoints::new(secondary)).transpose()?;
        Self::from_waypoints(manipulation_type, Waypoints::new(primary)?, secondary)
    }
}

/// Door-opening path: the handle traces a circular arc of `radius` about the
/// hinge frame's z-axis through `angle_range`, rotating with the door.
pub fn door_path(
    hinge_pose: &FramePose,
    radius: f64,
    angle_range: f64,
    hand: Side,
) -> Result<ManipulationPath, ManipulationError> {
    if radius <= 0.0 {
        return Err(ManipulationError::BadRadius(radius));
    }
    Ok(ManipulationPath {
        manipulation_type: match hand {
            Side::Left => ManipulationType::LeftHand,
            Side::Right => ManipulationType::RightHand,
        },
        shape: PathShape::DoorArc { hinge: hinge_pose.to_isometry(), radius, angle_range },
    })
}

/// Bimanual cart push: both hands translate by `length * direction * s` with
/// fixed orientations.
pub fn cart_path(
    left_start: &FramePose,
    right_start: &FramePose,
    direction: Vector3<f64>,
    length: f64,
) -> Result<ManipulationPath, ManipulationError> {
    let direction =
        UnitVector3::try_new(direction, 1e-9).ok_or(ManipulationError::ZeroDirection)?;
    if length < 0.0 {
        return Err(ManipulationError::BadLength(length));
    }
    Ok(ManipulationPath {
        manipulation_type: ManipulationType::BothHands,
        shape: PathShape::CartPush { left0: *left_start, right0: *right_start, direction, length },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn evaluate_endpoints_and_midpoint() {
        let a = FramePose::new(Vector3::new(0.0, 0.0, 1.0), UnitQuaternion::identity());
        let b = FramePose::new(Vector3::new(1.0, 0.0, 1.0), UnitQuaternion::identity());
        let path = ManipulationPath::from_waypoints(
            ManipulationType::RightHand,
            Waypoints::new(vec![(0.0, a), (1.0, b)]).unwrap(),
            None,
        )
        .unwrap();
        let p0 = path.evaluate(0.0).unwrap().right.unwrap();
        assert_eq!(p0.position, a.position);
        let mid = path.evaluate(0.5).unwrap().right.unwrap();
        assert!((mid.position - Vector3::new(0.5, 0.0, 1.0)).norm() < 1e-12);
        assert!(path.evaluate(1.2).is_err());
        assert!(path.evaluate(-0.1).is_err());
    }

    #[test]
    fn waypoint_invariants_enforced() {
        let p = FramePose::identity();
        assert!(Waypoints::new(vec![(0.0, p)]).is_err());
        assert!(Waypoints::new(vec![(0.1, p), (1.0, p)]).is_err());
        assert!(Waypoints::new(vec![(0.0, p), (0.5, p), (0.5, p), (1.0, p)]).is_err());
    }

    #[test]
    fn evaluate_exact_at_waypoints() {
        let mut pts = Vec::new();
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            pts.push((
                s,
                FramePose::new(
                    Vector3::new(s * 2.0, (s * 7.0).sin(), 1.0),
                    UnitQuaternion::from_euler_angles(0.0, 0.0, s),
                ),
            ));
        }
        let wp = Waypoints::new(pts.clone()).unwrap();
        for (s, pose) in &pts {
            let got = wp.evaluate(*s);
            assert!((got.position - pose.position).norm() < 1e-12);
            assert!(got.orientation.angle_to(&pose.orientation) < 1e-12);
        }
    }

    #[test]
    fn door_quarter_circle_oracle() {
        // Quarter-circle door swing of radius 0.9 about a vertical hinge.
        let hinge = FramePose::identity();
        let path = door_path(&hinge, 0.9, FRAC_PI_2, Side::Right).unwrap();
        let p = path.evaluate(0.25).unwrap().right.unwrap();
        // At s = 0.25 the door is at 22.5 degrees; the handle stays on the
        // radius-0.9 circle.
        let theta: f64 = FRAC_PI_2 * 0.25;
        let expect = Vector3::new(0.9 * theta.cos(), 0.9 * theta.sin(), 0.0);
        assert!((p.position - expect).norm() < 1e-9);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let p = path.evaluate(s).unwrap().right.unwrap();
            let d = (p.position.x * p.position.x + p.position.y * p.position.y).sqrt();
            assert!((d - 0.9).abs() < 1e-9);
        }
    }

    #[test]
    fn door_arc_length_oracle() {
        let hinge = FramePose::identity();
        let path = door_path(&hinge, 0.9, FRAC_PI_2, Side::Right).unwrap();
        // Fine polyline integration of the handle path.
        let n = 20000;
        let mut len = 0.0;
        let mut prev = path.evaluate(0.0).unwrap().right.unwrap().position;
        for i in 1..=n {
            let s = i as f64 / n as f64;
            let cur = path.evaluate(s).unwrap().right.unwrap().position;
            len += (cur - prev).norm();
            prev = cur;
        }
        assert!((len - 0.9 * FRAC_PI_2).abs() < 1e-3, "arc length {len}");
    }

    #[test]
    fn door_zero_angle_is_constant() {
        let hinge = FramePose::from_xy_yaw(0.5, -0.2, 0.3);
        let path = door_path(&hinge, 0.7, 0.0, Side::Left).unwrap();
        let p0 = path.evaluate(0.0).unwrap().left.unwrap();
        for i in 0..=10 {
            let p = path.evaluate(i as f64 / 10.0).unwrap().left.unwrap();
            assert!((p.position - p0.position).norm() < 1e-12);
            assert!(p.orientation.angle_to(&p0.orientation) < 1e-12);
        }
    }

    #[test]
    fn door_rejects_nonpositive_radius() {
        assert!(door_path(&FramePose::identity(), 0.0, 1.0, Side::Left).is_err());
        assert!(door_path(&FramePose::identity(), -1.0, 1.0, Side::Left).is_err());
    }

    #[test]
    fn cart_hands_stay_rigid() {
        let l = FramePose::new(Vector3::new(0.4, 0.2, 0.9), UnitQuaternion::identity());
        let r = FramePose::new(Vector3::new(0.4, -0.2, 0.9), UnitQuaternion::identity());
        let path = cart_path(&l, &r, Vector3::x(), 2.0).unwrap();
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let t = path.evaluate(s).unwrap();
            let gap = (t.left.unwrap().position - t.right.unwrap().position).norm();
            assert!((gap - 0.4).abs() < 1e-9);
        }
        let d = path.evaluate(1.0).unwrap().left.unwrap().position
            - path.evaluate(0.0).unwrap().left.unwrap().position;
        assert!((d - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        let d = path.evaluate(1.0).unwrap().right.unwrap().position
            - path.evaluate(0.0).unwrap().right.unwrap().position;
        assert!((d - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cart_zero_length_is_constant() {
        let l = FramePose::new(Vector3::new(0.4, 0.2, 0.9), UnitQuaternion::identity());
        let r = FramePose::new(Vector3::new(0.4, -0.2, 0.9), UnitQuaternion::identity());
        let path = cart_path(&l, &r, Vector3::x(), 0.0).unwrap();
        let a = path.evaluate(0.0).unwrap();
        let b = path.evaluate(0.77).unwrap();
        assert!((a.left.unwrap().position - b.left.unwrap().position).norm() < 1e-12);
    }

    #[test]
    fn cart_rejects_zero_direction() {
        let l = FramePose::identity();
        let r = FramePose::identity();
        assert!(cart_path(&l, &r, Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let l = FramePose::new(
            Vector3::new(0.4, 0.2, 0.9),
            UnitQuaternion::from_euler_angles(0.0, 0.1, 0.4),
        );
        let r = FramePose::new(Vector3::new(0.4, -0.2, 0.9), UnitQuaternion::identity());
        let path = cart_path(&l, &r, Vector3::x(), 1.5).unwrap();
        let text = path.to_file_string(21).unwrap();
        let parsed = ManipulationPath::from_file_string(&text).unwrap();
        assert_eq!(parsed.manipulation_type(), ManipulationType::BothHands);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let a = path.evaluate(s).unwrap();
            let b = parsed.evaluate(s).unwrap();
            assert!((a.left.unwrap().position - b.left.unwrap().position).norm() < 1e-6);
            assert!((a.right.unwrap().position - b.right.unwrap().position).norm() < 1e-6);
        }
    }

    #[test]
    fn path_continuity_in_s() {
        let hinge = FramePose::from_xy_yaw(0.6, -0.4, 0.2);
        let path = door_path(&hinge, 0.8, 1.2, Side::Right).unwrap().to_waypoints(50).unwrap();
        let mut prev = path.evaluate(0.0).unwrap().right.unwrap();
        let n = 5000;
        for i in 1..=n {
            let s = i as f64 / n as f64;
            let cur = path.evaluate(s).unwrap().right.unwrap();
            assert!((cur.position - prev.position).norm() < 1e-3);
            prev = cur;
        }
    }
}
