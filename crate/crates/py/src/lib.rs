//! Python bindings for the locomanip toolkit: the kinematic model, the
//! locomotion manifold, manipulation paths, whole-body IK, the feasibility
//! classifier, and the lattice planner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use locomanip::feasibility::{FeasibilityScorer, FeatureVector, MlpModel, FEATURE_DIM};
use locomanip::geometry::FramePose;
use locomanip::ik::{solve_ik_trajectory, IkSettings, PostureTask, TrajectoryTasks};
use locomanip::locomotion::{
    assemble_manifold, assemble_standstill, Footstep, GaitParams, InitialState,
};
use locomanip::manipulation::{cart_path, door_path, ManipulationPath};
use locomanip::model::{Configuration, RobotModel};
use locomanip::planner::{
    reconstruct, search, IkOracleEvaluator, LatticeConfig, PlannerWeights, SearchProblem,
    SuggestedPath,
};
use locomanip::scenario::{
    cart_manipulation, default_stance, door_manipulation, CartGeometry, DoorGeometry, Scenario,
};
use locomanip::transition::gait_for_model;
use locomanip::Side;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_side(s: &str) -> PyResult<Side> {
    match s {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(PyValueError::new_err(format!("expected left|right, got '{other}'"))),
    }
}

fn pose_to_tuple(p: &FramePose) -> ([f64; 3], [f64; 4]) {
    let q = p.orientation.quaternion();
    (p.position.into(), [q.w, q.i, q.j, q.k])
}

/// Kinematic humanoid model.
#[pyclass(name = "RobotModel")]
struct PyRobotModel {
    inner: RobotModel,
}

#[pymethods]
impl PyRobotModel {
    /// Load the bundled reduced humanoid.
    #[staticmethod]
    fn bundled() -> PyResult<Self> {
        Ok(Self {
            inner: RobotModel::from_description(locomanip::REDUCED_HUMANOID).map_err(err)?,
        })
    }

    /// Parse a model from a description string.
    #[staticmethod]
    fn from_description(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RobotModel::from_description(text).map_err(err)? })
    }

    #[getter]
    fn num_revolute_joints(&self) -> usize {
        self.inner.num_revolute_joints()
    }

    #[getter]
    fn ndof(&self) -> usize {
        self.inner.ndof()
    }

    fn nominal_configuration(&self) -> PyConfiguration {
        PyConfiguration { inner: self.inner.nominal_configuration() }
    }

    /// World pose of a frame: returns (position, quaternion wxyz).
    fn forward_kinematics(
        &self,
        q: &PyConfiguration,
        frame: &str,
    ) -> PyResult<([f64; 3], [f64; 4])> {
        let pose = self.inner.forward_kinematics(&q.inner, frame).map_err(err)?;
        Ok(pose_to_tuple(&pose))
    }

    /// Geometric Jacobian of a frame as a nested list (6 x ndof).
    fn frame_jacobian(&self, q: &PyConfiguration, frame: &str) -> PyResult<Vec<Vec<f64>>> {
        let jac = self.inner.frame_jacobian(&q.inner, frame).map_err(err)?;
        Ok((0..jac.nrows())
            .map(|r| (0..jac.ncols()).map(|c| jac[(r, c)]).collect())
            .collect())
    }

    fn com_position(&self, q: &PyConfiguration) -> PyResult<[f64; 3]> {
        Ok(self.inner.com_position(&q.inner).map_err(err)?.into())
    }

    fn clamp_configuration(&self, q: &PyConfiguration) -> PyResult<PyConfiguration> {
        Ok(PyConfiguration { inner: self.inner.clamp_configuration(&q.inner).map_err(err)? })
    }
}

/// Whole-body configuration: base pose plus joint vector.
#[pyclass(name = "Configuration")]
#[derive(Clone)]
struct PyConfiguration {
    inner: Configuration,
}

#[pymethods]
impl PyConfiguration {
    #[getter]
    fn joint_positions(&self) -> Vec<f64> {
        self.inner.joint_positions.iter().copied().collect()
    }

    #[getter]
    fn base_position(&self) -> [f64; 3] {
        self.inner.base_pose.translation.vector.into()
    }

    #[getter]
    fn base_quaternion(&self) -> [f64; 4] {
        let q = self.inner.base_pose.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// SE(3) manipulation path f(s).
#[pyclass(name = "ManipulationPath")]
struct PyManipulationPath {
    inner: ManipulationPath,
}

#[pymethods]
impl PyManipulationPath {
    /// Door-opening arc about a vertical hinge.
    #[staticmethod]
    fn door(
        hinge_position: [f64; 3],
        hinge_yaw: f64,
        radius: f64,
        angle_range: f64,
        hand: &str,
    ) -> PyResult<Self> {
        let hinge = FramePose::new(
            nalgebra::Vector3::from(hinge_position),
            nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, hinge_yaw),
        );
        Ok(Self {
            inner: door_path(&hinge, radius, angle_range, parse_side(hand)?).map_err(err)?,
        })
    }

    /// Bimanual cart push along a fixed direction.
    #[staticmethod]
    fn cart(
        left_start: [f64; 3],
        right_start: [f64; 3],
        direction: [f64; 3],
        length: f64,
    ) -> PyResult<Self> {
        let l = FramePose::new(
            nalgebra::Vector3::from(left_start),
            nalgebra::UnitQuaternion::identity(),
        );
        let r = FramePose::new(
            nalgebra::Vector3::from(right_start),
            nalgebra::UnitQuaternion::identity(),
        );
        Ok(Self {
            inner: cart_path(&l, &r, nalgebra::Vector3::from(direction), length).map_err(err)?,
        })
    }

    /// Evaluate f(s): dict of hand -> (position, quaternion wxyz).
    fn evaluate(&self, py: Python<'_>, s: f64) -> PyResult<PyObject> {
        let targets = self.inner.evaluate(s).map_err(err)?;
        let dict = pyo3::types::PyDict::new(py);
        if let Some(p) = targets.left {
            dict.set_item("left", pose_to_tuple(&p))?;
        }
        if let Some(p) = targets.right {
            dict.set_item("right", pose_to_tuple(&p))?;
        }
        Ok(dict.into())
    }

    #[getter]
    fn manipulation_type(&self) -> String {
        self.inner.manipulation_type().to_string()
    }
}

/// Assembled locomotion constraint manifold.
#[pyclass(name = "LocomotionTrajectory")]
struct PyLocomotionTrajectory {
    inner: locomanip::locomotion::LocomotionTrajectory,
}

#[pymethods]
impl PyLocomotionTrajectory {
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn com(&self, t: f64) -> [f64; 3] {
        self.inner.com(t).into()
    }

    fn left_foot(&self, t: f64) -> ([f64; 3], [f64; 4]) {
        pose_to_tuple(&self.inner.left_foot(t))
    }

    fn right_foot(&self, t: f64) -> ([f64; 3], [f64; 4]) {
        pose_to_tuple(&self.inner.right_foot(t))
    }

    fn pelvis_orientation(&self, t: f64) -> [f64; 4] {
        let q = self.inner.pelvis_orientation(t);
        let c = q.quaternion();
        [c.w, c.i, c.j, c.k]
    }

    /// Columnar sample export at the given time step.
    fn export_samples(&self, dt: f64) -> String {
        self.inner.export_samples(dt)
    }
}

/// Assemble the walking manifold for a footstep sequence.
///
/// `steps` is a list of (side, x, y, yaw) tuples; the initial stance is
/// given by the two sole poses as (x, y, yaw).
#[pyfunction]
#[pyo3(signature = (steps, left, right, t_swing=1.0, t_transfer=0.5, t_settle=1.5, com_height=0.95))]
fn build_manifold(
    steps: Vec<(String, f64, f64, f64)>,
    left: (f64, f64, f64),
    right: (f64, f64, f64),
    t_swing: f64,
    t_transfer: f64,
    t_settle: f64,
    com_height: f64,
) -> PyResult<PyLocomotionTrajectory> {
    let params = GaitParams { t_swing, t_transfer, t_settle, ..GaitParams::default() }
        .with_com_height(com_height);
    let left = FramePose::from_xy_yaw(left.0, left.1, left.2);
    let right = FramePose::from_xy_yaw(right.0, right.1, right.2);
    let footsteps: Vec<Footstep> = steps
        .into_iter()
        .map(|(side, x, y, yaw)| {
            Ok(Footstep { side: parse_side(&side)?, pose: FramePose::from_xy_yaw(x, y, yaw) })
        })
        .collect::<PyResult<_>>()?;
    let init = InitialState::standing(left, right);
    let traj = assemble_manifold(&footsteps, &init, &params).map_err(err)?;
    Ok(PyLocomotionTrajectory { inner: traj })
}

/// Feasibility classifier.
#[pyclass(name = "FeasibilityClassifier")]
struct PyClassifier {
    inner: MlpModel,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: MlpModel::load(std::path::Path::new(path)).map_err(err)? })
    }

    /// Deterministic randomly initialized network (for smoke tests).
    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self { inner: MlpModel::new_random(seed) }
    }

    /// Feed the 32-dim feature vector forward; returns the score in (0, 1).
    fn forward(&self, features: Vec<f64>) -> PyResult<f64> {
        if features.len() != FEATURE_DIM {
            return Err(PyValueError::new_err(format!(
                "expected {FEATURE_DIM} features, got {}",
                features.len()
            )));
        }
        let mut arr = [0.0; FEATURE_DIM];
        arr.copy_from_slice(&features);
        Ok(self.inner.score(&FeatureVector(arr)))
    }
}

/// Solve a whole-body IK trajectory over a stand-still manifold with the
/// hands tracking f(s) from s0 to s0 + delta_s. Returns (converged,
/// per-index joint vectors).
#[pyfunction]
#[pyo3(signature = (model, path, s0, delta_s, duration=2.0, n_steps=8))]
fn solve_standstill_ik(
    model: &PyRobotModel,
    path: &PyManipulationPath,
    s0: f64,
    delta_s: f64,
    duration: f64,
    n_steps: usize,
) -> PyResult<(bool, Vec<Vec<f64>>)> {
    let gait = gait_for_model(&model.inner).map_err(err)?;
    let (left, right) = default_stance();
    let start = locomanip::transition::standing_configuration(
        &model.inner,
        left,
        right,
        Some((&path.inner, s0)),
        &gait,
        &IkSettings::default(),
    )
    .map_err(err)?;
    if !start.converged {
        return Err(PyRuntimeError::new_err("standing start did not converge"));
    }
    let init = InitialState::standing(left, right);
    let manifold = assemble_standstill(&init, duration, &gait).map_err(err)?;
    let tasks = TrajectoryTasks {
        locomotion: &manifold,
        manipulation: Some((&path.inner, s0, delta_s)),
        posture: Some(PostureTask::torso_nominal(&model.inner)),
    };
    let settings = IkSettings { n_steps, ..IkSettings::default() };
    let res = solve_ik_trajectory(&model.inner, start.final_configuration(), &tasks, &settings)
        .map_err(err)?;
    let configs = res
        .configurations
        .iter()
        .map(|c| c.joint_positions.iter().copied().collect())
        .collect();
    Ok((res.converged, configs))
}

/// Plan one of the bundled scenarios ("door" or "cart") in IK-oracle mode.
/// Returns a dict with the cost, footstep count, and s(t) samples.
#[pyfunction]
#[pyo3(signature = (kind, seed=42, max_iterations=60))]
fn plan_scenario(
    py: Python<'_>,
    kind: &str,
    seed: u64,
    max_iterations: usize,
) -> PyResult<PyObject> {
    let model = RobotModel::from_description(locomanip::REDUCED_HUMANOID).map_err(err)?;
    let gait = gait_for_model(&model).map_err(err)?;
    let path = match kind {
        "door" => door_manipulation(&DoorGeometry::default()).map_err(err)?,
        "cart" => cart_manipulation(&CartGeometry::default()).map_err(err)?,
        other => return Err(PyValueError::new_err(format!("unknown scenario '{other}'"))),
    };
    let (left, right) = default_stance();
    let ik = IkSettings { n_steps: 8, max_iterations, ..IkSettings::default() };
    let scenario = Scenario::new(&model, path, left, right, gait, &ik).map_err(err)?;
    let lattice = LatticeConfig { delta_s_choices: vec![0.0, 0.1], ..LatticeConfig::default() };
    let weights = PlannerWeights::default();
    let frame = scenario.lattice_frame();
    let suggested =
        SuggestedPath::new(&scenario.manipulation, &scenario.start_left, &scenario.start_right)
            .map_err(err)?;
    let mut evaluator = IkOracleEvaluator {
        model: &model,
        manipulation: &scenario.manipulation,
        gait: scenario.gait,
        ik,
    };
    let problem = SearchProblem {
        lattice: &lattice,
        frame: &frame,
        weights: &weights,
        manipulation: &scenario.manipulation,
        suggested: &suggested,
        q_start: Some(&scenario.q_start),
    };
    let start = scenario.start_vertex(&lattice);
    let outcome = search(&problem, start, &mut evaluator, seed).map_err(err)?;
    let plan = reconstruct(
        outcome,
        &model,
        &scenario.manipulation,
        &scenario.gait,
        &ik,
        &lattice,
        &frame,
        &scenario.q_start,
        true,
    )
    .map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("cost", plan.total_cost)?;
    dict.set_item("edges", plan.actions.len())?;
    dict.set_item("footsteps", plan.footsteps.len())?;
    dict.set_item("duration", plan.duration)?;
    dict.set_item("s_of_t", plan.s_of_t())?;
    dict.set_item("expansions", plan.metrics.expansions)?;
    dict.set_item("edge_evaluations", plan.metrics.edge_evaluations)?;
    Ok(dict.into())
}

#[pymodule]
fn locomanip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRobotModel>()?;
    m.add_class::<PyConfiguration>()?;
    m.add_class::<PyManipulationPath>()?;
    m.add_class::<PyLocomotionTrajectory>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(build_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(solve_standstill_ik, m)?)?;
    m.add_function(wrap_pyfunction!(plan_scenario, m)?)?;
    m.add("FEATURE_DIM", FEATURE_DIM)?;
    Ok(())
}
