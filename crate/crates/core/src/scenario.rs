//! Bundled scenario builders: a door-opening arc for one hand and a bimanual
//! cart push, each with a standing start state solved onto the manifold.

use nalgebra::Vector3;

use crate::feasibility::SampleBounds;
use crate::geometry::FramePose;
use crate::ik::IkSettings;
use crate::locomotion::GaitParams;
use crate::manipulation::{cart_path, door_path, ManipulationPath};
use crate::model::{Configuration, RobotModel};
use crate::planner::{LatticeConfig, LatticeFrame, Vertex};
use crate::transition::{standing_configuration, TransitionError};
use crate::Side;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Manipulation(#[from] crate::manipulation::ManipulationError),
    #[error("the start state is outside the locomanipulation region: {0}")]
    StartInfeasible(String),
}

/// A ready-to-plan scenario.
pub struct Scenario {
    pub manipulation: ManipulationPath,
    pub start_left: FramePose,
    pub start_right: FramePose,
    pub gait: GaitParams,
    /// Standing start configuration with the hands on f(0).
    pub q_start: Configuration,
}

impl Scenario {
    /// Assemble a scenario from its parts, solving the start configuration.
    pub fn new(
        model: &RobotModel,
        manipulation: ManipulationPath,
        start_left: FramePose,
        start_right: FramePose,
        gait: GaitParams,
        ik: &IkSettings,
    ) -> Result<Self, ScenarioError> {
        let res = standing_configuration(
            model,
            start_left,
            start_right,
            Some((&manipulation, 0.0)),
            &gait,
            ik,
        )?;
        if !res.converged {
            return Err(ScenarioError::StartInfeasible(format!(
                "standing IK with hands at f(0) did not converge ({:?})",
                res.failure
            )));
        }
        Ok(Self {
            manipulation,
            start_left,
            start_right,
            gait,
            q_start: res.final_configuration().clone(),
        })
    }

    pub fn lattice_frame(&self) -> LatticeFrame {
        LatticeFrame::from_start(&self.start_left, &self.start_right)
    }

    pub fn start_vertex(&self, lattice: &LatticeConfig) -> Vertex {
        let frame = self.lattice_frame();
        Vertex {
            s: 0,
            left: frame.snap(&self.start_left, lattice),
            right: frame.snap(&self.start_right, lattice),
        }
    }
}

/// Door-opening geometry: the handle arcs about a vertical hinge axis.
#[derive(Clone, Copy, Debug)]
pub struct DoorGeometry {
    pub hinge_position: Vector3<f64>,
    pub hinge_yaw: f64,
    pub radius: f64,
    pub angle_range: f64,
    pub hand: Side,
}

impl Default for DoorGeometry {
    fn default() -> Self {
        // Handle starts at (0.40, -0.10, 1.05) in front of the right hand
        // and swings 60 degrees away, ending about 0.8 m out.
        Self {
            hinge_position: Vector3::new(0.40, -0.55, 1.05),
            hinge_yaw: std::f64::consts::FRAC_PI_2,
            radius: 0.45,
            angle_range: -std::f64::consts::FRAC_PI_3,
            hand: Side::Right,
        }
    }
}

pub fn door_manipulation(geom: &DoorGeometry) -> Result<ManipulationPath, ScenarioError> {
    let hinge = FramePose::new(
        geom.hinge_position,
        nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, geom.hinge_yaw),
    );
    Ok(door_path(&hinge, geom.radius, geom.angle_range, geom.hand)?)
}

/// Cart-push geometry: both hands translate along a fixed direction.
#[derive(Clone, Copy, Debug)]
pub struct CartGeometry {
    pub left_hand_start: Vector3<f64>,
    pub right_hand_start: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub length: f64,
}

impl Default for CartGeometry {
    fn default() -> Self {
        Self {
            left_hand_start: Vector3::new(0.36, 0.18, 1.00),
            right_hand_start: Vector3::new(0.36, -0.18, 1.00),
            direction: Vector3::x(),
            length: 1.2,
        }
    }
}

pub fn cart_manipulation(geom: &CartGeometry) -> Result<ManipulationPath, ScenarioError> {
    let left = FramePose::new(geom.left_hand_start, nalgebra::UnitQuaternion::identity());
    let right = FramePose::new(geom.right_hand_start, nalgebra::UnitQuaternion::identity());
    Ok(cart_path(&left, &right, geom.direction, geom.length)?)
}

/// Default double-support start stance on the lattice grid.
pub fn default_stance() -> (FramePose, FramePose) {
    (FramePose::from_xy_yaw(0.0, 0.1, 0.0), FramePose::from_xy_yaw(0.0, -0.1, 0.0))
}

/// Sampling bounds whose pelvis-height range suits the model.
pub fn sample_bounds_for_model(model: &RobotModel) -> SampleBounds {
    let pelvis = crate::feasibility::nominal_pelvis_height(model).unwrap_or(1.0);
    SampleBounds { pelvis_z: (pelvis - 0.14, pelvis), ..SampleBounds::default() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::gait_for_model;

    fn humanoid() -> RobotModel {
        RobotModel::from_description(crate::REDUCED_HUMANOID).unwrap()
    }

    #[test]
    fn door_scenario_start_is_feasible() {
        let model = humanoid();
        let gait = gait_for_model(&model).unwrap();
        let path = door_manipulation(&DoorGeometry::default()).unwrap();
        let (l, r) = default_stance();
        let ik = IkSettings::default();
        let scenario = Scenario::new(&model, path, l, r, gait, &ik);
        assert!(scenario.is_ok(), "{:?}", scenario.err().map(|e| e.to_string()));
    }

    #[test]
    fn cart_scenario_start_is_feasible() {
        let model = humanoid();
        let gait = gait_for_model(&model).unwrap();
        let path = cart_manipulation(&CartGeometry::default()).unwrap();
        let (l, r) = default_stance();
        let ik = IkSettings::default();
        let scenario = Scenario::new(&model, path, l, r, gait, &ik);
        assert!(scenario.is_ok(), "{:?}", scenario.err().map(|e| e.to_string()));
    }

    #[test]
    fn start_vertex_snaps_onto_lattice() {
        let model = humanoid();
        let gait = gait_for_model(&model).unwrap();
        let path = cart_manipulation(&CartGeometry::default()).unwrap();
        let (l, r) = default_stance();
        let scenario = Scenario::new(&model, path, l, r, gait, &IkSettings::default()).unwrap();
        let lattice = LatticeConfig::default();
        let v = scenario.start_vertex(&lattice);
        let frame = scenario.lattice_frame();
        let lp = frame.world_pose(v.left, &lattice);
        assert!((lp.position.x - l.position.x).abs() < 1e-9);
        assert!((lp.position.y - l.position.y).abs() < 1e-9);
    }
}
