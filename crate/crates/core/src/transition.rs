//! Contact transitions: the shared bridge between the planner, the
//! feasibility learner, and plan reconstruction. A transition is one optional
//! footstep plus an optional manipulation progression; it owns the recipe for
//! assembling the edge's locomotion manifold and solving its IK trajectory.

use nalgebra::Vector2;

use crate::ik::{solve_ik_trajectory, IkError, IkSettings, IkTrajectoryResult, PostureTask, TrajectoryTasks};
use crate::locomotion::{
    assemble_manifold, assemble_standstill, Footstep, GaitParams, InitialState,
    LocomotionTrajectory, LocomotionError,
};
use crate::manipulation::ManipulationPath;
use crate::model::{Configuration, FrameId, RobotModel};
use crate::FramePose;

#[derive(Debug, thiserror::Error)]
pub enum TransitionError {
    #[error(transparent)]
    Locomotion(#[from] LocomotionError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// One edge of the locomanipulation graph in workspace terms.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Stance at the source vertex.
    pub left: FramePose,
    pub right: FramePose,
    /// The footstep this transition takes, if any.
    pub step: Option<Footstep>,
    /// Manipulation progression over the edge.
    pub s_start: f64,
    pub delta_s: f64,
}

impl Transition {
    /// Duration of the edge's locomotion manifold.
    pub fn duration(&self, gait: &GaitParams) -> f64 {
        match self.step {
            Some(_) => gait.t_transfer + gait.t_swing + gait.t_settle,
            None => gait.t_transfer + gait.t_swing,
        }
    }

    /// Assemble the locomotion manifold for this transition, starting from
    /// the actual pelvis orientation and CoM of `q_start`.
    pub fn manifold(
        &self,
        model: &RobotModel,
        q_start: &Configuration,
        gait: &GaitParams,
    ) -> Result<LocomotionTrajectory, TransitionError> {
        let pelvis = model.frame_pose(q_start, FrameId::Pelvis)?;
        let com = model.com_position(q_start)?;
        let initial = InitialState {
            left: self.left,
            right: self.right,
            pelvis_orientation: pelvis.orientation,
            com_xy: Vector2::new(com.x, com.y),
        };
        let traj = match &self.step {
            Some(step) => assemble_manifold(std::slice::from_ref(step), &initial, gait)?,
            None => assemble_standstill(&initial, gait.t_transfer + gait.t_swing, gait)?,
        };
        Ok(traj)
    }

    /// Solve the transition's whole-body IK trajectory from `q_start`.
    pub fn solve(
        &self,
        model: &RobotModel,
        q_start: &Configuration,
        manipulation: Option<&ManipulationPath>,
        gait: &GaitParams,
        ik: &IkSettings,
    ) -> Result<IkTrajectoryResult, TransitionError> {
        let manifold = self.manifold(model, q_start, gait)?;
        let tasks = TrajectoryTasks {
            locomotion: &manifold,
            manipulation: manipulation.map(|p| (p, self.s_start, self.delta_s)),
            posture: Some(PostureTask::torso_nominal(model)),
        };
        Ok(solve_ik_trajectory(model, q_start, &tasks, ik)?)
    }
}

/// CoM height above the soles at the nominal standing posture.
pub fn standing_com_height(model: &RobotModel) -> Result<f64, crate::model::ModelError> {
    let q = model.nominal_configuration();
    let com = model.com_position(&q)?;
    let sole = model.frame_pose(&q, FrameId::LeftFoot)?.position.z;
    Ok(com.z - sole)
}

/// Gait parameters whose CoM height suits the model: slightly below the
/// nominal standing height so the legs keep vertical slack.
pub fn gait_for_model(model: &RobotModel) -> Result<GaitParams, TransitionError> {
    let z0 = standing_com_height(model)? - 0.02;
    Ok(GaitParams::default().with_com_height(z0))
}

/// Build a standing configuration on the manifold: feet at the given poses,
/// CoM at the polygon center at the gait's height, pelvis at the midfeet
/// orientation, optional hand constraints from a manipulation path at s.
pub fn standing_configuration(
    model: &RobotModel,
    left: FramePose,
    right: FramePose,
    manipulation: Option<(&ManipulationPath, f64)>,
    gait: &GaitParams,
    ik: &IkSettings,
) -> Result<IkTrajectoryResult, TransitionError> {
    let mut q = model.nominal_configuration();
    // Seed the floating base over the midfeet point at standing height.
    let sole_z = model.frame_pose(&q, FrameId::LeftFoot)?.position.z;
    let mid = crate::locomotion::support_center(&left, &right);
    let midyaw = 0.5 * (left.yaw() + right.yaw());
    q.base_pose = nalgebra::Isometry3::from_parts(
        nalgebra::Translation3::new(mid.x, mid.y, -sole_z),
        nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, midyaw),
    );
    let initial = InitialState::standing(left, right);
    let standstill = assemble_standstill(&initial, 1.0, gait)?;
    let tasks = TrajectoryTasks {
        locomotion: &standstill,
        manipulation: manipulation.map(|(p, s)| (p, s, 0.0)),
        posture: Some(PostureTask::torso_nominal(model)),
    };
    let settings = IkSettings { n_steps: 1, ..*ik };
    Ok(solve_ik_trajectory(model, &q, &tasks, &settings)?)
}
