//! Locomotion constraint manifold for a footstep sequence: a DCM-based CoM
//! trajectory, dual-hermite swing-foot curves, and a pelvis orientation
//! channel that tracks the midfeet frame.
//!
//! The CoM plan places the virtual repellant point (VRP) at the stance-foot
//! center during single support, interpolates it linearly across double
//! support transfers, and pins it at the support-polygon center (midfeet) at
//! the start and end of the trajectory. The divergent component of motion is
//! recursed backward from the terminal polygon center, then the CoM follows
//! by forward integration of `x_com' = omega * (xi - x_com)`.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{midpoint_orientation, CubicHermite, FramePose, QuatHermite};
use crate::Side;

/// Pelvis realignment is prepended when the pelvis is off the midfeet
/// orientation by more than this angle (2 degrees).
pub const REALIGN_TOLERANCE: f64 = 2.0 * std::f64::consts::PI / 180.0;

const FLAT_GROUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LocomotionError {
    #[error("invalid gait parameters: {0}")]
    BadParams(String),
    #[error("footstep for {0} foot is not flat on the ground (roll/pitch exceed 1e-6)")]
    NonFlatFootstep(Side),
    #[error("empty stance definition")]
    EmptyStance,
}

/// A planned foot contact: which foot lands, and its sole pose on the ground.
#[derive(Clone, Copy, Debug)]
pub struct Footstep {
    pub side: Side,
    pub pose: FramePose,
}

impl Footstep {
    pub fn is_flat(&self) -> bool {
        let (roll, pitch, _) = self.pose.orientation.euler_angles();
        roll.abs() < FLAT_GROUND_TOLERANCE && pitch.abs() < FLAT_GROUND_TOLERANCE
    }
}

/// Walking timing and geometry parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    /// Swing duration per step (s).
    pub t_swing: f64,
    /// Double-support transfer duration (s).
    pub t_transfer: f64,
    /// Final settling duration (s).
    pub t_settle: f64,
    /// Swing apex height above the higher of start/landing soles (m).
    pub swing_apex_height: f64,
    /// Constant CoM height z0 (m).
    pub com_height: f64,
    /// Gravity (m/s^2).
    pub gravity: f64,
    /// Natural frequency sqrt(g / z0); kept consistent with the fields above.
    pub omega: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        let com_height = 1.0;
        let gravity = 9.81;
        Self {
            t_swing: 1.0,
            t_transfer: 0.5,
            t_settle: 1.5,
            swing_apex_height: 0.08,
            com_height,
            gravity,
            omega: (gravity / com_height).sqrt(),
        }
    }
}

impl GaitParams {
    pub fn with_com_height(mut self, z0: f64) -> Self {
        self.com_height = z0;
        self.omega = (self.gravity / z0).sqrt();
        self
    }

    pub fn validate(&self) -> Result<(), LocomotionError> {
        if self.t_swing <= 0.0 || self.t_transfer <= 0.0 || self.t_settle <= 0.0 {
            return Err(LocomotionError::BadParams("phase durations must be positive".into()));
        }
        if self.com_height <= 0.0 || self.gravity <= 0.0 {
            return Err(LocomotionError::BadParams(
                "com height and gravity must be positive".into(),
            ));
        }
        if (self.omega - (self.gravity / self.com_height).sqrt()).abs() > 1e-12 {
            return Err(LocomotionError::BadParams(
                "omega inconsistent with gravity and com height".into(),
            ));
        }
        Ok(())
    }
}

/// Phase of the walking trajectory over a time span.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Realign,
    Transfer,
    Swing(Side),
    Settle,
    Stand,
}

impl Phase {
    pub fn label(&self) -> String {
        match self {
            Phase::Realign => "realign".into(),
            Phase::Transfer => "transfer".into(),
            Phase::Swing(s) => format!("swing_{s}"),
            Phase::Settle => "settle".into(),
            Phase::Stand => "stand".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PhaseSpan {
    pub t0: f64,
    pub t1: f64,
    pub phase: Phase,
}

/// One piecewise segment of the CoM plan with its closed-form coefficients.
#[derive(Clone, Copy, Debug)]
struct ComSegment {
    t0: f64,
    t1: f64,
    /// VRP endpoints (xy); linear in between.
    v0: Vector2<f64>,
    v1: Vector2<f64>,
    /// DCM value at t1 (terminal anchor of the backward recursion).
    xi_end: Vector2<f64>,
    /// CoM value at t0 (from the forward sweep).
    com_start: Vector2<f64>,
}

impl ComSegment {
    fn slope(&self) -> Vector2<f64> {
        (self.v1 - self.v0) / (self.t1 - self.t0)
    }

    fn vrp(&self, t: f64) -> Vector2<f64> {
        self.v0 + self.slope() * (t - self.t0)
    }

    /// DCM: xi(t) = vrp(t) + b/omega + C * exp(omega * (t - t1)).
    fn dcm(&self, t: f64, omega: f64) -> Vector2<f64> {
        let b = self.slope();
        let c = self.xi_end - (self.v1 + b / omega);
        self.vrp(t) + b / omega + c * (omega * (t - self.t1)).exp()
    }

    fn dcm_start(&self, omega: f64) -> Vector2<f64> {
        self.dcm(self.t0, omega)
    }

    /// CoM particular solution x_p(t) = v0 + b*(t-t0) + (C/2) exp(omega (t-t1)).
    fn com_particular(&self, t: f64, omega: f64) -> Vector2<f64> {
        let b = self.slope();
        let c = self.xi_end - (self.v1 + b / omega);
        self.v0 + b * (t - self.t0) + c * 0.5 * (omega * (t - self.t1)).exp()
    }

    fn com(&self, t: f64, omega: f64) -> Vector2<f64> {
        let xp0 = self.com_particular(self.t0, omega);
        (self.com_start - xp0) * (-omega * (t - self.t0)).exp() + self.com_particular(t, omega)
    }

    fn com_end(&self, omega: f64) -> Vector2<f64> {
        self.com(self.t1, omega)
    }
}

/// Evaluable CoM channel: piecewise closed-form DCM/CoM plan at constant height.
#[derive(Clone, Debug)]
pub struct ComChannel {
    segments: Vec<ComSegment>,
    omega: f64,
    com_height: f64,
}

impl ComChannel {
    fn locate(&self, t: f64) -> &ComSegment {
        let t = t.clamp(self.segments[0].t0, self.end_time());
        self.segments
            .iter()
            .find(|s| t <= s.t1)
            .unwrap_or_else(|| self.segments.last().unwrap())
    }

    pub fn com(&self, t: f64) -> Vector3<f64> {
        let t = t.clamp(self.segments[0].t0, self.end_time());
        let xy = self.locate(t).com(t, self.omega);
        Vector3::new(xy.x, xy.y, self.com_height)
    }

    pub fn dcm(&self, t: f64) -> Vector2<f64> {
        let t = t.clamp(self.segments[0].t0, self.end_time());
        self.locate(t).dcm(t, self.omega)
    }

    pub fn vrp(&self, t: f64) -> Vector2<f64> {
        let t = t.clamp(self.segments[0].t0, self.end_time());
        self.locate(t).vrp(t)
    }

    pub fn end_time(&self) -> f64 {
        self.segments.last().unwrap().t1
    }

    /// Segment join times, including 0 and the end time.
    pub fn segment_boundaries(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        times.push(self.end_time());
        times
    }

    /// VRP plan corner points (for hull checks and plotting).
    pub fn vrp_points(&self) -> Vec<Vector2<f64>> {
        let mut pts: Vec<Vector2<f64>> = Vec::new();
        for s in &self.segments {
            pts.push(s.v0);
            pts.push(s.v1);
        }
        pts
    }

    /// Largest DCM jump across interior segment joins.
    pub fn max_dcm_discontinuity(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| (w[0].dcm(w[0].t1, self.omega) - w[1].dcm(w[1].t0, self.omega)).norm())
            .fold(0.0, f64::max)
    }
}

/// Support polygon center: midpoint of the two sole origins.
pub fn support_center(left: &FramePose, right: &FramePose) -> Vector2<f64> {
    Vector2::new(
        0.5 * (left.position.x + right.position.x),
        0.5 * (left.position.y + right.position.y),
    )
}

/// Internal schedule entry: a VRP span with its phase.
struct VrpSpan {
    duration: f64,
    v0: Vector2<f64>,
    v1: Vector2<f64>,
    phase: Phase,
}

fn vrp_schedule(
    steps: &[Footstep],
    left0: &FramePose,
    right0: &FramePose,
    params: &GaitParams,
    realign_duration: f64,
) -> Result<Vec<VrpSpan>, LocomotionError> {
    let mut left = *left0;
    let mut right = *right0;
    let mut spans = Vec::new();
    let start_center = support_center(&left, &right);
    if realign_duration > 0.0 {
        spans.push(VrpSpan {
            duration: realign_duration,
            v0: start_center,
            v1: start_center,
            phase: Phase::Realign,
        });
    }
    let mut prev = start_center;
    for step in steps {
        if !step.is_flat() {
            return Err(LocomotionError::NonFlatFootstep(step.side));
        }
        let stance = match step.side {
            Side::Left => &right,
            Side::Right => &left,
        };
        let sc = Vector2::new(stance.position.x, stance.position.y);
        spans.push(VrpSpan {
            duration: params.t_transfer,
            v0: prev,
            v1: sc,
            phase: Phase::Transfer,
        });
        spans.push(VrpSpan {
            duration: params.t_swing,
            v0: sc,
            v1: sc,
            phase: Phase::Swing(step.side),
        });
        match step.side {
            Side::Left => left = step.pose,
            Side::Right => right = step.pose,
        }
        prev = sc;
    }
    // Final settle: VRP pinned at the final support-polygon center so the CoM
    // converges there; the DCM stays continuous through the recursion.
    let end_center = support_center(&left, &right);
    spans.push(VrpSpan {
        duration: params.t_settle,
        v0: end_center,
        v1: end_center,
        phase: Phase::Settle,
    });
    Ok(spans)
}

fn com_channel_from_schedule(
    spans: &[VrpSpan],
    initial_com: Vector2<f64>,
    params: &GaitParams,
) -> ComChannel {
    let omega = params.omega;
    let mut segments: Vec<ComSegment> = Vec::with_capacity(spans.len());
    let mut t = 0.0;
    for span in spans {
        segments.push(ComSegment {
            t0: t,
            t1: t + span.duration,
            v0: span.v0,
            v1: span.v1,
            xi_end: Vector2::zeros(),
            com_start: Vector2::zeros(),
        });
        t += span.duration;
    }
    // Backward DCM recursion: terminal DCM at the final VRP.
    let mut xi = segments.last().unwrap().v1;
    for seg in segments.iter_mut().rev() {
        seg.xi_end = xi;
        xi = seg.dcm_start(omega);
    }
    // Forward CoM sweep.
    let mut com = initial_com;
    for seg in segments.iter_mut() {
        seg.com_start = com;
        com = seg.com_end(omega);
    }
    ComChannel { segments, omega, com_height: params.com_height }
}

/// Build the CoM channel for a footstep sequence starting from double support.
pub fn build_com_trajectory(
    steps: &[Footstep],
    left0: &FramePose,
    right0: &FramePose,
    initial_com_xy: Vector2<f64>,
    params: &GaitParams,
) -> Result<ComChannel, LocomotionError> {
    params.validate()?;
    let spans = vrp_schedule(steps, left0, right0, params, 0.0)?;
    Ok(com_channel_from_schedule(&spans, initial_com_xy, params))
}

/// Swing-foot trajectory: two cubic hermite position segments joined at the
/// apex, orientation on a single hermite quaternion curve.
#[derive(Clone, Copy, Debug)]
pub struct SwingCurve {
    ascent: CubicHermite,
    descent: CubicHermite,
    orientation: QuatHermite,
    t_swing: f64,
}

impl SwingCurve {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        let half = 0.5 * self.t_swing;
        if t <= half {
            self.ascent.position(t)
        } else {
            self.descent.position(t - half)
        }
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let half = 0.5 * self.t_swing;
        if t <= half {
            self.ascent.velocity(t)
        } else {
            self.descent.velocity(t - half)
        }
    }

    pub fn orientation(&self, t: f64) -> UnitQuaternion<f64> {
        self.orientation.orientation(t)
    }

    pub fn pose(&self, t: f64) -> FramePose {
        FramePose::new(self.position(t), self.orientation(t))
    }

    pub fn duration(&self) -> f64 {
        self.t_swing
    }

    pub fn apex_velocity(&self) -> Vector3<f64> {
        self.ascent.v1
    }
}

/// Build a swing-foot curve from `start` to `land` over `t_swing`.
///
/// The apex sits at the temporal midpoint, at the xy midpoint, at
/// `max(start.z, land.z) + apex_height`, moving with the step's average
/// velocity `(land - start) / t_swing`. Start and landing velocities are zero.
pub fn build_swing_foot_trajectory(
    start: &FramePose,
    land: &FramePose,
    params: &GaitParams,
) -> Result<SwingCurve, LocomotionError> {
    if params.t_swing <= 0.0 {
        return Err(LocomotionError::BadParams("t_swing must be positive".into()));
    }
    let t_swing = params.t_swing;
    let apex_pos = Vector3::new(
        0.5 * (start.position.x + land.position.x),
        0.5 * (start.position.y + land.position.y),
        start.position.z.max(land.position.z) + params.swing_apex_height,
    );
    let apex_vel = (land.position - start.position) / t_swing;
    let half = 0.5 * t_swing;
    let ascent = CubicHermite {
        p0: start.position,
        v0: Vector3::zeros(),
        p1: apex_pos,
        v1: apex_vel,
        duration: half,
    };
    let descent = CubicHermite {
        p0: apex_pos,
        v0: apex_vel,
        p1: land.position,
        v1: Vector3::zeros(),
        duration: half,
    };
    let orientation = QuatHermite::new(start.orientation, land.orientation, t_swing);
    Ok(SwingCurve { ascent, descent, orientation, t_swing })
}

/// Pelvis orientation target: the SLERP average of the foot orientations.
pub fn pelvis_orientation(left: &FramePose, right: &FramePose) -> UnitQuaternion<f64> {
    midpoint_orientation(&left.orientation, &right.orientation)
}

/// Hermite quaternion curve realigning the pelvis before walking starts.
pub fn pelvis_realign_curve(
    current: UnitQuaternion<f64>,
    target: UnitQuaternion<f64>,
    duration: f64,
) -> QuatHermite {
    QuatHermite::new(current, target, duration)
}

#[derive(Clone, Debug)]
enum FootSegment {
    Hold { t1: f64, pose: FramePose },
    Swing { t0: f64, curve: SwingCurve },
}

impl FootSegment {
    fn end_time(&self) -> f64 {
        match self {
            FootSegment::Hold { t1, .. } => *t1,
            FootSegment::Swing { t0, curve } => t0 + curve.duration(),
        }
    }

    fn pose(&self, t: f64) -> FramePose {
        match self {
            FootSegment::Hold { pose, .. } => *pose,
            FootSegment::Swing { t0, curve } => curve.pose(t - t0),
        }
    }
}

/// Evaluable foot channel: holds during stance, swing curves in flight.
#[derive(Clone, Debug)]
pub struct FootChannel {
    segments: Vec<FootSegment>,
}

impl FootChannel {
    pub fn pose(&self, t: f64) -> FramePose {
        let t = t.max(0.0);
        for seg in &self.segments {
            if t <= seg.end_time() {
                return seg.pose(t);
            }
        }
        let last = self.segments.last().unwrap();
        last.pose(last.end_time())
    }
}

/// Initial double-support state the manifold starts from.
#[derive(Clone, Copy, Debug)]
pub struct InitialState {
    pub left: FramePose,
    pub right: FramePose,
    pub pelvis_orientation: UnitQuaternion<f64>,
    pub com_xy: Vector2<f64>,
}

impl InitialState {
    /// Steady standing state: pelvis at the midfeet orientation, CoM at the
    /// support-polygon center.
    pub fn standing(left: FramePose, right: FramePose) -> Self {
        let pelvis = pelvis_orientation(&left, &right);
        let com = support_center(&left, &right);
        Self { left, right, pelvis_orientation: pelvis, com_xy: com }
    }
}

/// The assembled locomotion constraint manifold: evaluable CoM, foot, and
/// pelvis-orientation channels with phase annotations.
#[derive(Clone, Debug)]
pub struct LocomotionTrajectory {
    duration: f64,
    com: ComChannel,
    left: FootChannel,
    right: FootChannel,
    realign: Option<QuatHermite>,
    realign_end: f64,
    phases: Vec<PhaseSpan>,
}

impl LocomotionTrajectory {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn com(&self, t: f64) -> Vector3<f64> {
        self.com.com(t)
    }

    pub fn com_channel(&self) -> &ComChannel {
        &self.com
    }

    pub fn left_foot(&self, t: f64) -> FramePose {
        self.left.pose(t.clamp(0.0, self.duration))
    }

    pub fn right_foot(&self, t: f64) -> FramePose {
        self.right.pose(t.clamp(0.0, self.duration))
    }

    pub fn foot(&self, side: Side, t: f64) -> FramePose {
        match side {
            Side::Left => self.left_foot(t),
            Side::Right => self.right_foot(t),
        }
    }

    /// Pelvis orientation: the realign curve while active, afterwards always
    /// the SLERP midpoint of the current foot orientations.
    pub fn pelvis_orientation(&self, t: f64) -> UnitQuaternion<f64> {
        let t = t.clamp(0.0, self.duration);
        if let Some(curve) = &self.realign {
            if t < self.realign_end {
                return curve.orientation(t);
            }
        }
        pelvis_orientation(&self.left_foot(t), &self.right_foot(t))
    }

    pub fn phases(&self) -> &[PhaseSpan] {
        &self.phases
    }

    pub fn phase_at(&self, t: f64) -> Phase {
        let t = t.clamp(0.0, self.duration);
        self.phases
            .iter()
            .find(|p| t <= p.t1)
            .map(|p| p.phase)
            .unwrap_or(Phase::Settle)
    }

    pub fn final_support_center(&self) -> Vector2<f64> {
        support_center(&self.left_foot(self.duration), &self.right_foot(self.duration))
    }

    /// Columnar sample rows: t, com xyz, left pose 7, right pose 7, pelvis
    /// quaternion 4, phase label.
    pub fn export_samples(&self, dt: f64) -> String {
        let mut out = String::from(
            "# t com_x com_y com_z lf_x lf_y lf_z lf_qw lf_qx lf_qy lf_qz rf_x rf_y rf_z rf_qw rf_qx rf_qy rf_qz pelvis_qw pelvis_qx pelvis_qy pelvis_qz phase\n",
        );
        let n = (self.duration / dt).ceil() as usize;
        for i in 0..=n {
            let t = (i as f64 * dt).min(self.duration);
            let com = self.com(t);
            let l = self.left_foot(t);
            let r = self.right_foot(t);
            let p = self.pelvis_orientation(t);
            let fq = |q: &UnitQuaternion<f64>| {
                let c = q.quaternion();
                format!("{:.9} {:.9} {:.9} {:.9}", c.w, c.i, c.j, c.k)
            };
            out.push_str(&format!(
                "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {} {:.9} {:.9} {:.9} {} {} {}\n",
                t,
                com.x,
                com.y,
                com.z,
                l.position.x,
                l.position.y,
                l.position.z,
                fq(&l.orientation),
                r.position.x,
                r.position.y,
                r.position.z,
                fq(&r.orientation),
                fq(&p),
                self.phase_at(t).label()
            ));
        }
        out
    }
}

/// Assemble the full locomotion manifold for a footstep sequence.
pub fn assemble_manifold(
    steps: &[Footstep],
    initial: &InitialState,
    params: &GaitParams,
) -> Result<LocomotionTrajectory, LocomotionError> {
    params.validate()?;
    for (pose, side) in [(initial.left, Side::Left), (initial.right, Side::Right)] {
        if !(Footstep { side, pose }).is_flat() {
            return Err(LocomotionError::NonFlatFootstep(side));
        }
    }

    let target = pelvis_orientation(&initial.left, &initial.right);
    let needs_realign = initial.pelvis_orientation.angle_to(&target) > REALIGN_TOLERANCE;
    let realign_duration = if needs_realign { params.t_transfer } else { 0.0 };
    let realign = needs_realign
        .then(|| pelvis_realign_curve(initial.pelvis_orientation, target, realign_duration));

    let spans = vrp_schedule(steps, &initial.left, &initial.right, params, realign_duration)?;
    let com = com_channel_from_schedule(&spans, initial.com_xy, params);

    let mut phases = Vec::with_capacity(spans.len());
    let mut t = 0.0;
    for span in &spans {
        phases.push(PhaseSpan { t0: t, t1: t + span.duration, phase: span.phase });
        t += span.duration;
    }
    let duration = t;

    let mut left_segs: Vec<FootSegment> = Vec::new();
    let mut right_segs: Vec<FootSegment> = Vec::new();
    let mut left = initial.left;
    let mut right = initial.right;
    let mut cursor = 0.0;
    let mut step_iter = steps.iter();
    for span in &spans {
        let t1 = cursor + span.duration;
        match span.phase {
            Phase::Swing(side) => {
                let step = step_iter.next().expect("swing span has a step");
                debug_assert_eq!(step.side, side);
                match side {
                    Side::Left => {
                        let curve = build_swing_foot_trajectory(&left, &step.pose, params)?;
                        left_segs.push(FootSegment::Swing { t0: cursor, curve });
                        right_segs.push(FootSegment::Hold { t1, pose: right });
                        left = step.pose;
                    }
                    Side::Right => {
                        let curve = build_swing_foot_trajectory(&right, &step.pose, params)?;
                        right_segs.push(FootSegment::Swing { t0: cursor, curve });
                        left_segs.push(FootSegment::Hold { t1, pose: left });
                        right = step.pose;
                    }
                }
            }
            _ => {
                left_segs.push(FootSegment::Hold { t1, pose: left });
                right_segs.push(FootSegment::Hold { t1, pose: right });
            }
        }
        cursor = t1;
    }

    Ok(LocomotionTrajectory {
        duration,
        com,
        left: FootChannel { segments: left_segs },
        right: FootChannel { segments: right_segs },
        realign,
        realign_end: realign_duration,
        phases,
    })
}

/// Stand-still manifold: both feet held, VRP at the polygon center, for an
/// arbitrary duration. Used for manipulation-only moves.
pub fn assemble_standstill(
    initial: &InitialState,
    duration: f64,
    params: &GaitParams,
) -> Result<LocomotionTrajectory, LocomotionError> {
    if duration <= 0.0 {
        return Err(LocomotionError::BadParams("duration must be positive".into()));
    }
    let mut p = *params;
    p.t_settle = duration;
    let mut traj = assemble_manifold(&[], initial, &p)?;
    for span in traj.phases.iter_mut() {
        if span.phase == Phase::Settle {
            span.phase = Phase::Stand;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn flat(x: f64, y: f64, yaw: f64) -> FramePose {
        FramePose::from_xy_yaw(x, y, yaw)
    }

    fn stance() -> (FramePose, FramePose) {
        (flat(0.0, 0.11, 0.0), flat(0.0, -0.11, 0.0))
    }

    /// RK4 forward integration of x' = omega (xi(t) - x) against the channel's
    /// own DCM; independent check of the closed-form CoM. Steps are aligned to
    /// segment joins, where the right-hand side is only piecewise smooth.
    fn integrate_com_oracle(channel: &ComChannel, x0: Vector2<f64>, omega: f64) -> Vector2<f64> {
        let mut x = x0;
        let dt = 1e-4_f64;
        let bounds = channel.segment_boundaries();
        for w in bounds.windows(2) {
            let (mut t, t1) = (w[0], w[1]);
            while t < t1 - 1e-15 {
                let h = dt.min(t1 - t);
                let f = |tt: f64, xx: Vector2<f64>| (channel.dcm(tt) - xx) * omega;
                let k1 = f(t, x);
                let k2 = f(t + 0.5 * h, x + k1 * (0.5 * h));
                let k3 = f(t + 0.5 * h, x + k2 * (0.5 * h));
                let k4 = f(t + h, x + k3 * h);
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                t += h;
            }
        }
        x
    }

    /// Backward RK4 integration of xi' = omega (xi - vrp(t)) from the terminal
    /// condition; independent check of the closed-form DCM.
    fn integrate_dcm_oracle(channel: &ComChannel, omega: f64, t_query: f64) -> Vector2<f64> {
        let t_end = channel.end_time();
        let mut xi = channel.vrp(t_end);
        let dt = 1e-4_f64;
        let mut bounds = channel.segment_boundaries();
        bounds.push(t_query);
        bounds.retain(|&b| b >= t_query - 1e-15);
        bounds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for w in bounds.windows(2) {
            let (mut t, t1) = (w[0], w[1]);
            while t > t1 + 1e-15 {
                let h = dt.min(t - t1);
                // The commanded VRP may jump at joins; keep evaluations inside
                // the current segment.
                let f = |tt: f64, x: Vector2<f64>| (x - channel.vrp(tt.max(t1 + 1e-9))) * omega;
                let k1 = f(t, xi);
                let k2 = f(t - 0.5 * h, xi - k1 * (0.5 * h));
                let k3 = f(t - 0.5 * h, xi - k2 * (0.5 * h));
                let k4 = f(t - h, xi - k3 * h);
                xi -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                t -= h;
            }
        }
        xi
    }

    #[test]
    fn zero_steps_com_converges_to_center() {
        let (l, r) = stance();
        let params = GaitParams { t_settle: 2.0, ..GaitParams::default() };
        // Start the CoM slightly off-center to exercise the decay.
        let start = Vector2::new(0.04, 0.02);
        let ch = build_com_trajectory(&[], &l, &r, start, &params).unwrap();
        let center = support_center(&l, &r);
        let end = ch.com(ch.end_time());
        assert!((Vector2::new(end.x, end.y) - center).norm() < 1e-3);
        let oracle = integrate_com_oracle(&ch, start, params.omega);
        assert!((Vector2::new(end.x, end.y) - oracle).norm() < 1e-6);
    }

    #[test]
    fn closed_form_com_matches_ode_oracle_with_steps() {
        let (l, r) = stance();
        let steps = [
            Footstep { side: Side::Right, pose: flat(0.25, -0.11, 0.0) },
            Footstep { side: Side::Left, pose: flat(0.5, 0.11, 0.0) },
        ];
        let params = GaitParams::default();
        let start = support_center(&l, &r);
        let ch = build_com_trajectory(&steps, &l, &r, start, &params).unwrap();
        let oracle = integrate_com_oracle(&ch, start, params.omega);
        let end = ch.com(ch.end_time());
        assert!(
            (Vector2::new(end.x, end.y) - oracle).norm() < 1e-6,
            "closed form vs ODE oracle: {end:?} vs {oracle:?}"
        );
    }

    #[test]
    fn closed_form_dcm_matches_backward_ode_oracle() {
        let (l, r) = stance();
        let steps = [Footstep { side: Side::Left, pose: flat(0.2, 0.11, 0.0) }];
        let params = GaitParams::default();
        let ch = build_com_trajectory(&steps, &l, &r, support_center(&l, &r), &params).unwrap();
        for &t in &[0.0, 0.3, 0.9, 1.7] {
            let oracle = integrate_dcm_oracle(&ch, params.omega, t);
            assert!(
                (ch.dcm(t) - oracle).norm() < 1e-6,
                "dcm({t}): {:?} vs {oracle:?}",
                ch.dcm(t)
            );
        }
    }

    #[test]
    fn step_in_place_returns_com_to_center() {
        let (l, r) = stance();
        let steps = [Footstep { side: Side::Right, pose: r }];
        let params = GaitParams::default();
        let center = support_center(&l, &r);
        let ch = build_com_trajectory(&steps, &l, &r, center, &params).unwrap();
        let end = ch.com(ch.end_time());
        assert!(
            (Vector2::new(end.x, end.y) - center).norm() < 1e-3,
            "residual {}",
            (Vector2::new(end.x, end.y) - center).norm()
        );
    }

    #[test]
    fn dcm_channel_is_continuous() {
        let (l, r) = stance();
        let steps = [
            Footstep { side: Side::Left, pose: flat(0.3, 0.11, 0.2) },
            Footstep { side: Side::Right, pose: flat(0.55, -0.13, 0.2) },
            Footstep { side: Side::Left, pose: flat(0.8, 0.15, 0.4) },
        ];
        let ch =
            build_com_trajectory(&steps, &l, &r, support_center(&l, &r), &GaitParams::default())
                .unwrap();
        assert!(ch.max_dcm_discontinuity() < 1e-9);
    }

    #[test]
    fn dcm_stays_in_vrp_hull() {
        let (l, r) = stance();
        let steps = [
            Footstep { side: Side::Right, pose: flat(0.25, -0.11, 0.0) },
            Footstep { side: Side::Left, pose: flat(0.5, 0.11, 0.0) },
            Footstep { side: Side::Right, pose: flat(0.75, -0.11, 0.0) },
        ];
        let ch =
            build_com_trajectory(&steps, &l, &r, support_center(&l, &r), &GaitParams::default())
                .unwrap();
        let pts = ch.vrp_points();
        let (mut lo, mut hi) = (pts[0], pts[0]);
        for p in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let mut t = 0.0;
        while t <= ch.end_time() {
            let xi = ch.dcm(t);
            assert!(xi.x >= lo.x - 1e-6 && xi.x <= hi.x + 1e-6, "dcm x out of hull at {t}");
            assert!(xi.y >= lo.y - 1e-6 && xi.y <= hi.y + 1e-6, "dcm y out of hull at {t}");
            t += 0.01;
        }
    }

    #[test]
    fn swing_in_place_is_vertical() {
        let start = flat(0.1, 0.2, 0.0);
        let params = GaitParams::default();
        let curve = build_swing_foot_trajectory(&start, &start, &params).unwrap();
        assert!(curve.apex_velocity().norm() < 1e-12);
        let apex = curve.position(0.5 * params.t_swing);
        assert!((apex - Vector3::new(0.1, 0.2, params.swing_apex_height)).norm() < 1e-12);
        let mid = curve.position(0.31 * params.t_swing);
        assert!((mid.x - 0.1).abs() < 1e-12 && (mid.y - 0.2).abs() < 1e-12);
    }

    #[test]
    fn swing_apex_velocity_is_average_velocity() {
        let start = flat(0.0, 0.0, 0.0);
        let land = flat(0.3, 0.0, 0.0);
        let params = GaitParams::default(); // t_swing = 1.0
        let curve = build_swing_foot_trajectory(&start, &land, &params).unwrap();
        assert!((curve.apex_velocity() - Vector3::new(0.3, 0.0, 0.0)).norm() < 1e-9);
        let apex = curve.position(0.5);
        assert!((apex - Vector3::new(0.15, 0.0, params.swing_apex_height)).norm() < 1e-9);
        assert!((curve.velocity(0.5) - Vector3::new(0.3, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn swing_boundary_velocities_vanish() {
        let start = flat(0.0, 0.0, 0.0);
        let land = flat(0.25, 0.1, 0.0);
        let params = GaitParams::default();
        let curve = build_swing_foot_trajectory(&start, &land, &params).unwrap();
        assert!(curve.velocity(0.0).norm() < 1e-9);
        assert!(curve.velocity(params.t_swing).norm() < 1e-9);
        assert!((curve.position(0.0) - start.position).norm() < 1e-12);
        assert!((curve.position(params.t_swing) - land.position).norm() < 1e-12);
    }

    #[test]
    fn pelvis_orientation_midpoint_and_symmetry() {
        let a = flat(0.0, 0.1, 0.0);
        let b = flat(0.0, -0.1, std::f64::consts::FRAC_PI_2);
        let mid = pelvis_orientation(&a, &b);
        let (_, _, yaw) = mid.euler_angles();
        assert!((yaw - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
        assert!(pelvis_orientation(&b, &a).angle_to(&mid) < 1e-9);
        let c = flat(0.3, 0.0, 0.7);
        let d = flat(-0.1, 0.0, 0.7);
        assert!(pelvis_orientation(&c, &d).angle_to(&c.orientation) < 1e-12);
    }

    #[test]
    fn realign_curve_constant_when_aligned() {
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.4);
        let curve = pelvis_realign_curve(q, q, 1.0);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            assert!(curve.orientation(t).angle_to(&q) < 1e-12);
        }
    }

    #[test]
    fn assemble_zero_steps_duration_and_constant_feet() {
        let (l, r) = stance();
        let init = InitialState::standing(l, r);
        let params = GaitParams::default();
        let traj = assemble_manifold(&[], &init, &params).unwrap();
        assert!((traj.duration() - params.t_settle).abs() < 1e-12);
        for i in 0..=20 {
            let t = traj.duration() * i as f64 / 20.0;
            assert!((traj.left_foot(t).position - l.position).norm() < 1e-12);
            assert!((traj.right_foot(t).position - r.position).norm() < 1e-12);
        }
    }

    #[test]
    fn assemble_prepends_realign_only_when_needed() {
        let (l, r) = stance();
        let mut init = InitialState::standing(l, r);
        init.pelvis_orientation = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.3);
        let params = GaitParams::default();
        let traj = assemble_manifold(&[], &init, &params).unwrap();
        assert!((traj.duration() - (params.t_transfer + params.t_settle)).abs() < 1e-12);
        assert_eq!(traj.phases()[0].phase, Phase::Realign);
        let end_ori = traj.pelvis_orientation(params.t_transfer);
        assert!(end_ori.angle_to(&pelvis_orientation(&l, &r)) < 1e-9);
    }

    #[test]
    fn assemble_one_step_phase_bookkeeping() {
        let (l, r) = stance();
        let init = InitialState::standing(l, r);
        let params = GaitParams::default();
        let step = Footstep { side: Side::Left, pose: flat(0.2, 0.11, 0.0) };
        let traj = assemble_manifold(&[step], &init, &params).unwrap();
        let swings: Vec<&PhaseSpan> = traj
            .phases()
            .iter()
            .filter(|p| matches!(p.phase, Phase::Swing(_)))
            .collect();
        assert_eq!(swings.len(), 1);
        assert_eq!(swings[0].phase, Phase::Swing(Side::Left));
        for i in 0..=50 {
            let t = traj.duration() * i as f64 / 50.0;
            assert!((traj.right_foot(t).position - r.position).norm() < 1e-12);
        }
        let expected = params.t_transfer + params.t_swing + params.t_settle;
        assert!((traj.duration() - expected).abs() < 1e-12);
    }

    #[test]
    fn assemble_two_steps_pelvis_tracks_midfeet() {
        let (l, r) = stance();
        let init = InitialState::standing(l, r);
        let params = GaitParams::default();
        let steps = [
            Footstep { side: Side::Left, pose: flat(0.2, 0.11, 0.3) },
            Footstep { side: Side::Right, pose: flat(0.4, -0.11, 0.3) },
        ];
        let traj = assemble_manifold(&steps, &init, &params).unwrap();
        for span in traj.phases() {
            if matches!(span.phase, Phase::Transfer | Phase::Settle) {
                for frac in [0.0, 0.5, 1.0] {
                    let t = span.t0 + frac * (span.t1 - span.t0);
                    let expect = pelvis_orientation(&traj.left_foot(t), &traj.right_foot(t));
                    assert!(traj.pelvis_orientation(t).angle_to(&expect) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn channels_are_continuous() {
        let (l, r) = stance();
        let init = InitialState::standing(l, r);
        let params = GaitParams::default();
        let steps = [
            Footstep { side: Side::Left, pose: flat(0.2, 0.11, 0.0) },
            Footstep { side: Side::Right, pose: flat(0.4, -0.11, 0.0) },
        ];
        let traj = assemble_manifold(&steps, &init, &params).unwrap();
        let dt = 1e-4_f64;
        let mut t = dt;
        let mut prev =
            (traj.com(0.0), traj.left_foot(0.0).position, traj.right_foot(0.0).position);
        while t <= traj.duration() {
            let cur = (traj.com(t), traj.left_foot(t).position, traj.right_foot(t).position);
            assert!((cur.0 - prev.0).norm() < 1e-2, "com jump at {t}");
            assert!((cur.1 - prev.1).norm() < 1e-2, "left jump at {t}");
            assert!((cur.2 - prev.2).norm() < 1e-2, "right jump at {t}");
            prev = cur;
            t += dt;
        }
    }

    #[test]
    fn orientation_channels_stay_unit() {
        let (l, r) = stance();
        let mut init = InitialState::standing(l, r);
        init.pelvis_orientation = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.2);
        let steps = [Footstep { side: Side::Right, pose: flat(0.25, -0.12, 0.25) }];
        let traj = assemble_manifold(&steps, &init, &GaitParams::default()).unwrap();
        for i in 0..=200 {
            let t = traj.duration() * i as f64 / 200.0;
            for q in [
                traj.pelvis_orientation(t),
                traj.left_foot(t).orientation,
                traj.right_foot(t).orientation,
            ] {
                assert!((q.into_inner().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_sequences_reach_final_center() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let params = GaitParams { t_settle: 2.0, ..GaitParams::default() };
        for _ in 0..20 {
            let (mut l, mut r) = stance();
            let mut steps = Vec::new();
            let n = rng.gen_range(1..5);
            let mut side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
            for _ in 0..n {
                let other = match side {
                    Side::Left => r,
                    Side::Right => l,
                };
                let pose = flat(
                    other.position.x + rng.gen_range(-0.05..0.25),
                    other.position.y + if side == Side::Left { 0.22 } else { -0.22 },
                    0.0,
                );
                steps.push(Footstep { side, pose });
                match side {
                    Side::Left => l = pose,
                    Side::Right => r = pose,
                }
                side = side.opposite();
            }
            let (l0, r0) = stance();
            let ch =
                build_com_trajectory(&steps, &l0, &r0, support_center(&l0, &r0), &params).unwrap();
            let end = ch.com(ch.end_time());
            let center = support_center(&l, &r);
            assert!(
                (Vector2::new(end.x, end.y) - center).norm() < 1e-3,
                "terminal CoM {end} vs center {center}"
            );
        }
    }

    #[test]
    fn standstill_has_stand_phase() {
        let (l, r) = stance();
        let init = InitialState::standing(l, r);
        let traj = assemble_standstill(&init, 1.2, &GaitParams::default()).unwrap();
        assert!((traj.duration() - 1.2).abs() < 1e-12);
        assert_eq!(traj.phase_at(0.6), Phase::Stand);
    }
}
