//! Kinematic humanoid model: tree of point-mass links connected by revolute
//! joints under a floating base, with forward kinematics, geometric Jacobians,
//! center of mass, joint-space inertia weighting, and joint-limit clamping.

mod parse;

pub use parse::SCHEMA_NOTES;

use nalgebra::{DMatrix, Isometry3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use std::collections::HashMap;
use thiserror::Error;

use crate::geometry::FramePose;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cycle in kinematic graph involving link '{0}'")]
    Cycle(String),
    #[error("missing named frame or link '{0}'")]
    MissingFrame(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("configuration has {got} joint positions, model has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JointKind {
    Revolute,
    FloatingBase,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub axis: UnitVector3<f64>,
    /// Fixed transform from the parent link frame to this joint's frame.
    pub origin: Isometry3<f64>,
    pub limits: (f64, f64),
    pub parent_link: usize,
    pub child_link: usize,
    /// Index into the configuration's joint vector; None for the floating base.
    pub q_index: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    pub com_offset: Vector3<f64>,
    /// Joint connecting this link to its parent; None only for the root.
    pub parent_joint: Option<usize>,
}

/// A named frame: a link plus a fixed local offset (e.g. ankle link -> sole).
#[derive(Clone, Debug)]
pub struct NamedFrame {
    pub link: usize,
    pub local: Isometry3<f64>,
}

/// The five frames the locomotion and manipulation tasks address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameId {
    Pelvis,
    LeftFoot,
    RightFoot,
    LeftHand,
    RightHand,
}

impl FrameId {
    pub const ALL: [FrameId; 5] = [
        FrameId::Pelvis,
        FrameId::LeftFoot,
        FrameId::RightFoot,
        FrameId::LeftHand,
        FrameId::RightHand,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            FrameId::Pelvis => "pelvis",
            FrameId::LeftFoot => "left_foot",
            FrameId::RightFoot => "right_foot",
            FrameId::LeftHand => "left_hand",
            FrameId::RightHand => "right_hand",
        }
    }
}

/// Immutable kinematic model. Links are stored parent-before-child, the root
/// link (floating base) first; revolute joints are numbered in file order.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    /// Revolute joint indices in q-order.
    pub revolute_joints: Vec<usize>,
    pub frames: HashMap<String, NamedFrame>,
    /// q-indices of the torso posture group (may be empty for test chains).
    pub torso_group: Vec<usize>,
    /// Nominal posture (length = revolute joint count).
    pub nominal_posture: Vec<f64>,
    link_index: HashMap<String, usize>,
}

/// Whole-body configuration: floating-base pose plus revolute joint positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub base_pose: Isometry3<f64>,
    pub joint_positions: nalgebra::DVector<f64>,
}

impl Configuration {
    pub fn ndof(&self) -> usize {
        6 + self.joint_positions.len()
    }
}

/// How the IK pseudoinverse weighting matrix is built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InertiaWeighting {
    Identity,
    CompositeRigidBody { lambda: f64 },
}

impl Default for InertiaWeighting {
    fn default() -> Self {
        // Point-mass links give some distal joints nearly zero composite
        // inertia (axes through the mass); the floor keeps the inverse
        // weighting bounded.
        InertiaWeighting::CompositeRigidBody { lambda: 1e-2 }
    }
}

impl RobotModel {
    /// Parse a model from its structured text description.
    pub fn from_description(text: &str) -> Result<Self, ModelError> {
        parse::parse_model(text)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        parse::parse_model(&text)
    }

    pub fn num_revolute_joints(&self) -> usize {
        self.revolute_joints.len()
    }

    pub fn ndof(&self) -> usize {
        6 + self.revolute_joints.len()
    }

    pub fn link_id(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    pub fn nominal_configuration(&self) -> Configuration {
        Configuration {
            base_pose: Isometry3::identity(),
            joint_positions: nalgebra::DVector::from_vec(self.nominal_posture.clone()),
        }
    }

    pub fn check_dimension(&self, q: &Configuration) -> Result<(), ModelError> {
        if q.joint_positions.len() != self.num_revolute_joints() {
            return Err(ModelError::DimensionMismatch {
                got: q.joint_positions.len(),
                expected: self.num_revolute_joints(),
            });
        }
        Ok(())
    }

    /// World transforms of every link, parent-before-child order.
    pub fn link_transforms(&self, q: &Configuration) -> Result<Vec<Isometry3<f64>>, ModelError> {
        self.check_dimension(q)?;
        let mut world = vec![Isometry3::identity(); self.links.len()];
        world[0] = q.base_pose;
        for (li, link) in self.links.iter().enumerate().skip(1) {
            let joint = &self.joints[link.parent_joint.expect("non-root link has parent")];
            let parent = world[joint.parent_link];
            let motion = match joint.kind {
                JointKind::Revolute => {
                    let angle = q.joint_positions[joint.q_index.expect("revolute has q index")];
                    Isometry3::from_parts(
                        Translation3::identity(),
                        UnitQuaternion::from_axis_angle(&joint.axis, angle),
                    )
                }
                JointKind::FloatingBase => Isometry3::identity(),
            };
            world[li] = parent * joint.origin * motion;
        }
        Ok(world)
    }

    fn resolve_frame(&self, frame: &str) -> Result<(usize, Isometry3<f64>), ModelError> {
        if let Some(nf) = self.frames.get(frame) {
            return Ok((nf.link, nf.local));
        }
        if let Some(li) = self.link_id(frame) {
            return Ok((li, Isometry3::identity()));
        }
        Err(ModelError::UnknownFrame(frame.to_string()))
    }

    /// Pose of a named frame (or bare link) in world coordinates.
    pub fn forward_kinematics(
        &self,
        q: &Configuration,
        frame: &str,
    ) -> Result<FramePose, ModelError> {
        let world = self.link_transforms(q)?;
        self.frame_pose_in(&world, frame)
    }

    pub fn frame_pose(&self, q: &Configuration, frame: FrameId) -> Result<FramePose, ModelError> {
        self.forward_kinematics(q, frame.key())
    }

    /// Frame pose from precomputed link transforms.
    pub fn frame_pose_in(
        &self,
        world: &[Isometry3<f64>],
        frame: &str,
    ) -> Result<FramePose, ModelError> {
        let (link, local) = self.resolve_frame(frame)?;
        Ok(FramePose::from_isometry(&(world[link] * local)))
    }

    /// Geometric Jacobian of a frame: 6 x ndof, linear rows stacked on angular
    /// rows, floating-base columns first (world linear, world angular).
    pub fn frame_jacobian(&self, q: &Configuration, frame: &str) -> Result<DMatrix<f64>, ModelError> {
        let world = self.link_transforms(q)?;
        let mut jac = DMatrix::zeros(6, self.ndof());
        self.fill_frame_jacobian_in(&world, frame, &mut jac, 0)?;
        Ok(jac)
    }

    /// Fill six Jacobian rows for a frame from precomputed link transforms.
    pub fn fill_frame_jacobian_in(
        &self,
        world: &[Isometry3<f64>],
        frame: &str,
        jac: &mut DMatrix<f64>,
        row0: usize,
    ) -> Result<(), ModelError> {
        let (link, local) = self.resolve_frame(frame)?;
        let point = (world[link] * local).translation.vector;
        self.fill_point_jacobian(world, link, &point, jac, row0, true);
        Ok(())
    }

    /// Linear-velocity Jacobian of an arbitrary point rigidly attached to `link`.
    fn fill_point_jacobian(
        &self,
        world: &[Isometry3<f64>],
        link: usize,
        point: &Vector3<f64>,
        jac: &mut DMatrix<f64>,
        row0: usize,
        with_angular: bool,
    ) {
        let base_origin = world[0].translation.vector;
        let r = point - base_origin;
        // Base linear velocity columns.
        for k in 0..3 {
            jac[(row0 + k, k)] = 1.0;
        }
        // Base angular velocity columns: v = w x r.
        let skew_r = r.cross_matrix();
        for row in 0..3 {
            for col in 0..3 {
                jac[(row0 + row, 3 + col)] = -skew_r[(row, col)];
            }
        }
        if with_angular {
            for k in 0..3 {
                jac[(row0 + 3 + k, 3 + k)] = 1.0;
            }
        }
        // Walk from the link up to the root, filling revolute columns.
        let mut cur = link;
        while let Some(ji) = self.links[cur].parent_joint {
            let joint = &self.joints[ji];
            if joint.kind == JointKind::Revolute {
                let qi = joint.q_index.expect("revolute has q index");
                // Joint frame in world: parent link transform composed with origin.
                let jframe = world[joint.parent_link] * joint.origin;
                let axis_w = jframe.rotation * joint.axis.into_inner();
                let anchor = jframe.translation.vector;
                let lin = axis_w.cross(&(point - anchor));
                for k in 0..3 {
                    jac[(row0 + k, 6 + qi)] = lin[k];
                }
                if with_angular {
                    for k in 0..3 {
                        jac[(row0 + 3 + k, 6 + qi)] = axis_w[k];
                    }
                }
            }
            cur = joint.parent_link;
        }
    }

    /// Mass-weighted average of link center-of-mass positions.
    pub fn com_position(&self, q: &Configuration) -> Result<Vector3<f64>, ModelError> {
        let world = self.link_transforms(q)?;
        Ok(self.com_position_in(&world))
    }

    pub fn com_position_in(&self, world: &[Isometry3<f64>]) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        let mut total = 0.0;
        for (li, link) in self.links.iter().enumerate() {
            acc += link.mass * (world[li] * nalgebra::Point3::from(link.com_offset)).coords;
            total += link.mass;
        }
        acc / total
    }

    /// 3 x ndof Jacobian of the center of mass.
    pub fn com_jacobian(&self, q: &Configuration) -> Result<DMatrix<f64>, ModelError> {
        let world = self.link_transforms(q)?;
        let mut jac = DMatrix::zeros(3, self.ndof());
        self.fill_com_jacobian_in(&world, &mut jac, 0);
        Ok(jac)
    }

    /// Fill three CoM-Jacobian rows from precomputed link transforms.
    pub fn fill_com_jacobian_in(
        &self,
        world: &[Isometry3<f64>],
        jac: &mut DMatrix<f64>,
        row0: usize,
    ) {
        let total: f64 = self.links.iter().map(|l| l.mass).sum();
        let n = self.ndof();
        let mut link_jac = DMatrix::zeros(3, n);
        for (li, link) in self.links.iter().enumerate() {
            let p = (world[li] * nalgebra::Point3::from(link.com_offset)).coords;
            link_jac.fill(0.0);
            self.fill_point_jacobian(world, li, &p, &mut link_jac, 0, false);
            for r in 0..3 {
                for c in 0..n {
                    jac[(row0 + r, c)] += link_jac[(r, c)] * (link.mass / total);
                }
            }
        }
    }

    /// Composite joint-space inertia from point-mass links:
    /// sum over links of m_i * J_i^T J_i with J_i the link-CoM linear Jacobian.
    pub fn joint_space_inertia(&self, q: &Configuration) -> Result<DMatrix<f64>, ModelError> {
        let world = self.link_transforms(q)?;
        Ok(self.joint_space_inertia_in(&world))
    }

    /// Composite joint-space inertia from precomputed link transforms.
    pub fn joint_space_inertia_in(&self, world: &[Isometry3<f64>]) -> DMatrix<f64> {
        let n = self.ndof();
        let mut a = DMatrix::zeros(n, n);
        let mut link_jac = DMatrix::zeros(3, n);
        for (li, link) in self.links.iter().enumerate() {
            let p = (world[li] * nalgebra::Point3::from(link.com_offset)).coords;
            link_jac.fill(0.0);
            self.fill_point_jacobian(world, li, &p, &mut link_jac, 0, false);
            a.gemm_tr(link.mass, &link_jac, &link_jac, 1.0);
        }
        a
    }

    /// The weighting matrix the IK pseudoinverse uses.
    pub fn ik_weighting(
        &self,
        q: &Configuration,
        mode: InertiaWeighting,
    ) -> Result<DMatrix<f64>, ModelError> {
        let world = self.link_transforms(q)?;
        Ok(self.ik_weighting_in(&world, mode))
    }

    /// IK weighting matrix from precomputed link transforms.
    pub fn ik_weighting_in(&self, world: &[Isometry3<f64>], mode: InertiaWeighting) -> DMatrix<f64> {
        match mode {
            InertiaWeighting::Identity => DMatrix::identity(self.ndof(), self.ndof()),
            InertiaWeighting::CompositeRigidBody { lambda } => {
                let mut a = self.joint_space_inertia_in(world);
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda;
                }
                a
            }
        }
    }

    /// Clamp revolute joints into their limit boxes; the base pose is kept
    /// (its quaternion is renormalized).
    pub fn clamp_configuration(&self, q: &Configuration) -> Result<Configuration, ModelError> {
        self.check_dimension(q)?;
        let mut joints = q.joint_positions.clone();
        for (qi, &ji) in self.revolute_joints.iter().enumerate() {
            let (lo, hi) = self.joints[ji].limits;
            joints[qi] = joints[qi].clamp(lo, hi);
        }
        let rot = UnitQuaternion::new_normalize(*q.base_pose.rotation.quaternion());
        Ok(Configuration {
            base_pose: Isometry3::from_parts(q.base_pose.translation, rot),
            joint_positions: joints,
        })
    }

    /// Apply a tangent-space step (6 base + n joint increments), then clamp.
    /// Base angular increment is a world-frame rotation vector.
    pub fn integrate(
        &self,
        q: &Configuration,
        dq: &nalgebra::DVector<f64>,
    ) -> Result<Configuration, ModelError> {
        assert_eq!(dq.len(), self.ndof(), "step dimension");
        let dp = Vector3::new(dq[0], dq[1], dq[2]);
        let dw = Vector3::new(dq[3], dq[4], dq[5]);
        let base = Isometry3::from_parts(
            Translation3::from(q.base_pose.translation.vector + dp),
            UnitQuaternion::from_scaled_axis(dw) * q.base_pose.rotation,
        );
        let mut joints = q.joint_positions.clone();
        for i in 0..joints.len() {
            joints[i] += dq[6 + i];
        }
        self.clamp_configuration(&Configuration {
            base_pose: base,
            joint_positions: joints,
        })
    }

    /// Hand pose in the pelvis frame at the nominal posture. Used as the
    /// "home" pose of a hand that is not manipulating.
    pub fn nominal_hand_in_pelvis(&self, hand: FrameId) -> Result<Isometry3<f64>, ModelError> {
        let q = self.nominal_configuration();
        let pelvis = self.frame_pose(&q, FrameId::Pelvis)?.to_isometry();
        let hand = self.frame_pose(&q, hand)?.to_isometry();
        Ok(pelvis.inverse() * hand)
    }
}

#[cfg(test)]
mod tests;
