//! Locomanipulation planning toolkit for limbed humanoids.
//!
//! Given a desired hand path `f(s)` with `s` in `[0, 1]` and a walking scheme
//! expressed as a task-space constraint manifold (CoM, feet, pelvis), this
//! crate searches for a progression trajectory `s(t)` plus a footstep
//! sequence whose combined whole-body IK trajectory satisfies both. The main
//! pieces:
//!
//! - [`model`]: kinematic humanoid model (FK, Jacobians, CoM, joint-space
//!   inertia, limit clamping) loaded from a text description.
//! - [`locomotion`]: DCM-based CoM trajectories, hermite swing-foot curves,
//!   and pelvis orientation channels for a footstep sequence.
//! - [`manipulation`]: SE(3) hand paths (door arcs, cart pushes, waypoint
//!   files).
//! - [`ik`]: task-stacked whole-body IK with a dynamically consistent
//!   pseudoinverse, nullspace posture task, gain backtracking, and clamping.
//! - [`feasibility`]: a learned classifier over contact-transition features
//!   that scores transition feasibility, plus training-data generation and
//!   region-grid export.
//! - [`planner`]: lazy weighted A* over the manipulation-progress/footstep
//!   lattice, with plan reconstruction through the IK.

pub mod config;
pub mod feasibility;
pub mod geometry;
pub mod ik;
pub mod locomotion;
pub mod manipulation;
pub mod model;
pub mod planner;
pub mod scenario;
pub mod transition;

pub use geometry::FramePose;
pub use model::{Configuration, FrameId, InertiaWeighting, ModelError, RobotModel};

/// Bundled reduced-humanoid model description (29 revolute joints).
pub const REDUCED_HUMANOID: &str = include_str!("../assets/reduced_humanoid.model");

/// Side of the body, used for feet and hands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(&self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn foot_frame(&self) -> FrameId {
        match self {
            Side::Left => FrameId::LeftFoot,
            Side::Right => FrameId::RightFoot,
        }
    }

    pub fn hand_frame(&self) -> FrameId {
        match self {
            Side::Left => FrameId::LeftHand,
            Side::Right => FrameId::RightHand,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}
