//! Shared SE(3) / SO(3) primitives: frame poses, quaternion interpolation,
//! and the cubic hermite segments used by the trajectory builders.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

/// A frame pose in world coordinates: position plus unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl FramePose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Planar pose on the ground plane (z = 0, yaw-only orientation).
    pub fn from_xy_yaw(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            position: Vector3::new(x, y, 0.0),
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
        }
    }

    /// Yaw of the frame's x-axis projected onto the ground plane.
    pub fn yaw(&self) -> f64 {
        let x_axis = self.orientation * Vector3::x();
        x_axis.y.atan2(x_axis.x)
    }

    /// Left-multiply by a rigid transform (re-express this pose in a moved world).
    pub fn transformed(&self, t: &Isometry3<f64>) -> Self {
        Self::from_isometry(&(t * self.to_isometry()))
    }

    /// This pose expressed in the `reference` frame.
    pub fn relative_to(&self, reference: &FramePose) -> Self {
        Self::from_isometry(&(reference.to_isometry().inverse() * self.to_isometry()))
    }
}

/// Rotation-vector error taking `current` onto `target`, expressed in the
/// world frame (left difference, shortest arc).
pub fn orientation_error(
    target: &UnitQuaternion<f64>,
    current: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    (target * current.inverse()).scaled_axis()
}

/// Angle of the relative rotation between two orientations.
pub fn orientation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Shortest-arc slerp; falls back to the nearest endpoint for antipodal inputs.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    a.try_slerp(b, t, 1e-12)
        .unwrap_or(if t < 0.5 { *a } else { *b })
}

/// Orientation midway between two frames, shortest arc.
pub fn midpoint_orientation(
    a: &UnitQuaternion<f64>,
    b: &UnitQuaternion<f64>,
) -> UnitQuaternion<f64> {
    slerp(a, b, 0.5)
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x <= -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

/// Cubic hermite position segment over a time interval.
#[derive(Clone, Copy, Debug)]
pub struct CubicHermite {
    pub p0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub v1: Vector3<f64>,
    pub duration: f64,
}

impl CubicHermite {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        let u = (t / self.duration).clamp(0.0, 1.0);
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        self.p0 * h00
            + self.v0 * (h10 * self.duration)
            + self.p1 * h01
            + self.v1 * (h11 * self.duration)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let u = (t / self.duration).clamp(0.0, 1.0);
        let u2 = u * u;
        let dh00 = 6.0 * u2 - 6.0 * u;
        let dh10 = 3.0 * u2 - 4.0 * u + 1.0;
        let dh01 = -6.0 * u2 + 6.0 * u;
        let dh11 = 3.0 * u2 - 2.0 * u;
        (self.p0 * dh00 + self.v0 * (dh10 * self.duration) + self.p1 * dh01
            + self.v1 * (dh11 * self.duration))
            / self.duration
    }
}

/// Quintic smoothstep blend: zero first and second derivatives at both ends.
/// Evaluated symmetrically so both tails keep full relative precision.
pub fn smoothstep(u: f64) -> f64 {
    fn tail(x: f64) -> f64 {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
    let u = u.clamp(0.0, 1.0);
    if u <= 0.5 {
        tail(u)
    } else {
        1.0 - tail(1.0 - u)
    }
}

/// Hermite quaternion curve: a geodesic from `q0` to `q1` time-scaled so the
/// angular velocity vanishes at both endpoints.
#[derive(Clone, Copy, Debug)]
pub struct QuatHermite {
    q0: UnitQuaternion<f64>,
    delta: Vector3<f64>,
    duration: f64,
}

impl QuatHermite {
    pub fn new(q0: UnitQuaternion<f64>, q1: UnitQuaternion<f64>, duration: f64) -> Self {
        // Body-frame rotation vector from q0 to q1, shortest arc.
        let mut rel = q0.inverse() * q1;
        if rel.quaternion().w < 0.0 {
            rel = UnitQuaternion::new_unchecked(-rel.into_inner());
        }
        Self {
            q0,
            delta: rel.scaled_axis(),
            duration,
        }
    }

    pub fn orientation(&self, t: f64) -> UnitQuaternion<f64> {
        let s = smoothstep(t / self.duration);
        self.q0 * UnitQuaternion::from_scaled_axis(self.delta * s)
    }

    /// World-frame angular velocity; exactly zero at both endpoints.
    pub fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        let u = (t / self.duration).clamp(0.0, 1.0);
        let dsdu = 30.0 * u * u * (1.0 - u) * (1.0 - u);
        let body = self.delta * (dsdu / self.duration);
        self.orientation(t) * body
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn start(&self) -> UnitQuaternion<f64> {
        self.q0
    }

    pub fn end(&self) -> UnitQuaternion<f64> {
        self.orientation(self.duration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn slerp_midpoint_of_yaws() {
        let a = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.0);
        let b = UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2);
        let mid = midpoint_orientation(&a, &b);
        let (_, _, yaw) = mid.euler_angles();
        assert!((yaw - FRAC_PI_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn slerp_midpoint_symmetric() {
        let a = UnitQuaternion::from_euler_angles(0.1, -0.2, 0.7);
        let b = UnitQuaternion::from_euler_angles(-0.3, 0.4, -1.1);
        let m1 = midpoint_orientation(&a, &b);
        let m2 = midpoint_orientation(&b, &a);
        assert!(m1.angle_to(&m2) < 1e-9);
    }

    #[test]
    fn slerp_takes_shortest_arc() {
        let a = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.0);
        // Same rotation as -10 degrees, represented the long way around.
        let b = UnitQuaternion::from_euler_angles(0.0, 0.0, -10f64.to_radians());
        let mid = slerp(&a, &b, 0.5);
        assert!(mid.angle() < 6f64.to_radians());
    }

    #[test]
    fn hermite_endpoint_conditions() {
        let h = CubicHermite {
            p0: Vector3::new(0.0, 0.0, 0.0),
            v0: Vector3::zeros(),
            p1: Vector3::new(0.3, 0.1, 0.0),
            v1: Vector3::new(0.3, 0.0, 0.0),
            duration: 0.5,
        };
        assert!((h.position(0.0) - h.p0).norm() < 1e-12);
        assert!((h.position(0.5) - h.p1).norm() < 1e-12);
        assert!(h.velocity(0.0).norm() < 1e-12);
        assert!((h.velocity(0.5) - h.v1).norm() < 1e-12);
    }

    #[test]
    fn quat_hermite_boundary_conditions() {
        let q0 = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.0);
        let q1 = UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2);
        let curve = QuatHermite::new(q0, q1, 1.0);
        assert!(curve.orientation(0.0).angle_to(&q0) < 1e-12);
        assert!(curve.orientation(1.0).angle_to(&q1) < 1e-9);
        // Numeric angular velocity at the endpoints; small-angle magnitude is
        // read off the vector part to dodge the acos precision floor.
        let dt = 1e-6;
        let small_angle = |a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>| {
            2.0 * (a.inverse() * b).into_inner().imag().norm()
        };
        let w0 = small_angle(&curve.orientation(0.0), &curve.orientation(dt)) / dt;
        let w1 = small_angle(&curve.orientation(1.0 - dt), &curve.orientation(1.0)) / dt;
        assert!(w0 < 1e-9, "start angular velocity {w0}");
        assert!(w1 < 1e-9, "end angular velocity {w1}");
        assert_eq!(curve.angular_velocity(0.0).norm(), 0.0);
        assert_eq!(curve.angular_velocity(1.0).norm(), 0.0);
        // Mid-curve the analytic derivative must match finite differences.
        let t = 0.37;
        let fd = (curve.orientation(t + dt) * curve.orientation(t - dt).inverse()).scaled_axis()
            / (2.0 * dt);
        assert!((fd - curve.angular_velocity(t)).norm() < 1e-6);
    }

    #[test]
    fn quat_hermite_midpoint_yaw_between_endpoints() {
        let q0 = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.1);
        let q1 = UnitQuaternion::from_euler_angles(0.0, 0.0, 1.2);
        let curve = QuatHermite::new(q0, q1, 2.0);
        let (_, _, yaw) = curve.orientation(1.0).euler_angles();
        assert!(yaw > 0.1 && yaw < 1.2);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }
}
