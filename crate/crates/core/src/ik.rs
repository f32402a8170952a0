//! Whole-body IK configuration trajectories: stacked locomanipulation tasks
//! resolved with a dynamically consistent pseudoinverse, a nullspace posture
//! task on the torso, gain backtracking, and joint-limit clamping.
//!
//! A trajectory is discretized into N+1 indices; each index iterates
//!
//! ```text
//! dx = x_target(i) - x(q)                      (orientation via log-map)
//! dq = k_p * pinv_A(J) * dx + pinv_A(J_P * N) * dx_P
//! q  = clamp(q + dq)
//! ```
//!
//! until every task residual is below tolerance. When an iteration increases
//! the stacked error norm it is rejected and retried with `k_p <- beta * k_p`.
//! An index fails when the applied step norm drops below `dq_epsilon` or the
//! iteration budget runs out.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{orientation_error, FramePose};
use crate::locomotion::LocomotionTrajectory;
use crate::manipulation::ManipulationPath;
use crate::model::{Configuration, FrameId, InertiaWeighting, ModelError, RobotModel};

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("manipulation path error: {0}")]
    Manipulation(#[from] crate::manipulation::ManipulationError),
    #[error("invalid settings: {0}")]
    BadSettings(String),
}

/// Why a trajectory solve failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IkFailure {
    /// The applied configuration step collapsed below `dq_epsilon`.
    StalledDq,
    /// The per-index iteration budget ran out.
    MaxIterations,
}

impl std::fmt::Display for IkFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IkFailure::StalledDq => write!(f, "stalled-dq"),
            IkFailure::MaxIterations => write!(f, "max-iterations"),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct IkSettings {
    /// Trajectory discretization count N (indices 0..=N).
    pub n_steps: usize,
    /// Primary task gain, reset at each index.
    pub k_p: f64,
    /// Backtracking factor applied to k_p when the error increases.
    pub beta: f64,
    /// Per-task error-norm convergence threshold.
    pub task_tolerance: f64,
    /// Iteration budget per index.
    pub max_iterations: usize,
    /// Step-norm stall threshold.
    pub dq_epsilon: f64,
    /// Backtracking retries within one iteration.
    pub max_backtracks: usize,
    /// Pseudoinverse weighting matrix mode.
    #[serde(skip)]
    pub weighting: InertiaWeighting,
    /// Collect a per-iteration debug log on the result.
    pub collect_debug: bool,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            n_steps: 12,
            k_p: 1.0,
            beta: 0.8,
            task_tolerance: 1e-4,
            max_iterations: 500,
            dq_epsilon: 1e-12,
            max_backtracks: 60,
            weighting: InertiaWeighting::default(),
            collect_debug: false,
        }
    }
}

impl IkSettings {
    pub fn validate(&self) -> Result<(), IkError> {
        if self.n_steps < 1 {
            return Err(IkError::BadSettings("n_steps must be >= 1".into()));
        }
        if !(0.0 < self.beta && self.beta < 1.0) {
            return Err(IkError::BadSettings("beta must be in (0, 1)".into()));
        }
        if self.task_tolerance <= 0.0 || self.k_p <= 0.0 {
            return Err(IkError::BadSettings("gains and tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One primary task target at a trajectory index.
#[derive(Clone, Copy, Debug)]
pub enum TaskTarget {
    /// 3-row center-of-mass position task.
    Com(Vector3<f64>),
    /// 6-row SE(3) frame task.
    Pose(FrameId, FramePose),
    /// 3-row orientation-only frame task.
    Orientation(FrameId, UnitQuaternion<f64>),
}

impl TaskTarget {
    pub fn rows(&self) -> usize {
        match self {
            TaskTarget::Com(_) => 3,
            TaskTarget::Pose(..) => 6,
            TaskTarget::Orientation(..) => 3,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TaskTarget::Com(_) => "com".into(),
            TaskTarget::Pose(f, _) => f.key().into(),
            TaskTarget::Orientation(f, _) => format!("{}_ori", f.key()),
        }
    }
}

/// Secondary joint-position task applied in the primary nullspace.
#[derive(Clone, Debug)]
pub struct PostureTask {
    /// q-indices of the joints it conditions.
    pub q_indices: Vec<usize>,
    /// Nominal positions, one per q-index.
    pub nominal: Vec<f64>,
    /// Gain on the posture error; keeps the secondary pull gentle so it
    /// conditions the trajectory without fighting the primary stack.
    pub gain: f64,
    /// Norm cap on the resolved posture step (rad). The nullspace-projected
    /// pseudoinverse blows up when the primary stack leaves almost no slack;
    /// the cap bounds the secondary step like a trust region.
    pub step_cap: f64,
}

impl PostureTask {
    pub const DEFAULT_GAIN: f64 = 0.3;
    pub const DEFAULT_STEP_CAP: f64 = 0.05;

    /// Torso posture task at the model's nominal configuration.
    pub fn torso_nominal(model: &RobotModel) -> Self {
        let q_indices = model.torso_group.clone();
        let nominal = q_indices.iter().map(|&qi| model.nominal_posture[qi]).collect();
        Self { q_indices, nominal, gain: Self::DEFAULT_GAIN, step_cap: Self::DEFAULT_STEP_CAP }
    }
}

/// The stacked primary tasks plus the secondary posture task for one index.
#[derive(Clone, Debug)]
pub struct StackedTask {
    pub primary: Vec<TaskTarget>,
    pub posture: Option<PostureTask>,
}

/// Dynamically consistent pseudoinverse `(A^-1 J^T)(J A^-1 J^T)^+` with the
/// inner pseudoinverse truncating singular values below `sigma_max * 1e-8`.
pub fn dynamically_consistent_pinv(j: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(j.ncols() == a.nrows() && a.is_square(), "dimension mismatch");
    assert!(j.nrows() > 0, "empty task matrix");
    let chol = a
        .clone()
        .cholesky()
        .expect("weighting matrix must be symmetric positive definite");
    let a_inv_jt = chol.solve(&j.transpose());
    let m = j * &a_inv_jt;
    let svd = m.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-8;
    let m_pinv = svd.pseudo_inverse(cutoff).expect("pseudo inverse of square matrix");
    a_inv_jt * m_pinv
}

/// Stacked task errors and Jacobian at the current configuration.
///
/// Returns `(J, dx, per-task error norms)` with orientation errors expressed
/// as world-frame rotation vectors.
pub fn stacked_task_errors(
    model: &RobotModel,
    q: &Configuration,
    tasks: &[TaskTarget],
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<f64>), ModelError> {
    let world = model.link_transforms(q)?;
    let rows: usize = tasks.iter().map(|t| t.rows()).sum();
    let n = model.ndof();
    let mut jac = DMatrix::zeros(rows, n);
    let mut dx = DVector::zeros(rows);
    let mut norms = Vec::with_capacity(tasks.len());
    let mut row = 0;
    for task in tasks {
        match task {
            TaskTarget::Com(target) => {
                let com = model.com_position_in(&world);
                model.fill_com_jacobian_in(&world, &mut jac, row);
                let err = target - com;
                dx.rows_mut(row, 3).copy_from(&err);
                norms.push(err.norm());
                row += 3;
            }
            TaskTarget::Pose(frame, target) => {
                let pose = model.frame_pose_in(&world, frame.key())?;
                model.fill_frame_jacobian_in(&world, frame.key(), &mut jac, row)?;
                let ep = target.position - pose.position;
                let eo = orientation_error(&target.orientation, &pose.orientation);
                dx.rows_mut(row, 3).copy_from(&ep);
                dx.rows_mut(row + 3, 3).copy_from(&eo);
                norms.push((ep.norm_squared() + eo.norm_squared()).sqrt());
                row += 6;
            }
            TaskTarget::Orientation(frame, target) => {
                let pose = model.frame_pose_in(&world, frame.key())?;
                let mut full = DMatrix::zeros(6, n);
                model.fill_frame_jacobian_in(&world, frame.key(), &mut full, 0)?;
                jac.view_mut((row, 0), (3, n)).copy_from(&full.rows(3, 3));
                let eo = orientation_error(target, &pose.orientation);
                dx.rows_mut(row, 3).copy_from(&eo);
                norms.push(eo.norm());
                row += 3;
            }
        }
    }
    Ok((jac, dx, norms))
}

/// Task errors only (no Jacobians): the cheap evaluation used by the
/// backtracking line search and convergence checks.
pub fn task_error_norms(
    model: &RobotModel,
    q: &Configuration,
    tasks: &[TaskTarget],
) -> Result<(f64, Vec<f64>), ModelError> {
    let world = model.link_transforms(q)?;
    let mut total = 0.0;
    let mut norms = Vec::with_capacity(tasks.len());
    for task in tasks {
        let sq = match task {
            TaskTarget::Com(target) => (target - model.com_position_in(&world)).norm_squared(),
            TaskTarget::Pose(frame, target) => {
                let pose = model.frame_pose_in(&world, frame.key())?;
                (target.position - pose.position).norm_squared()
                    + orientation_error(&target.orientation, &pose.orientation).norm_squared()
            }
            TaskTarget::Orientation(frame, target) => {
                let pose = model.frame_pose_in(&world, frame.key())?;
                orientation_error(target, &pose.orientation).norm_squared()
            }
        };
        norms.push(sq.sqrt());
        total += sq;
    }
    Ok((total.sqrt(), norms))
}

/// Outcome of a single IK iteration.
#[derive(Clone, Debug)]
pub struct IterateOutcome {
    pub q_next: Configuration,
    /// Stacked primary error norm before the step.
    pub error_before: f64,
    /// Stacked primary error norm after the accepted step.
    pub error_after: f64,
    /// Norm of the applied configuration step (0 when every candidate was
    /// rejected by backtracking).
    pub dq_norm: f64,
}

/// One gain-backtracked update: compute the task errors, resolve the step
/// through the weighted pseudoinverse with the posture term in the nullspace,
/// clamp, and retry with `k_p <- beta * k_p` while the stacked error grows.
///
/// `k_p` is mutated by the retry loop so callers can log the accepted gain;
/// the solver starts each iteration from the configured value.
pub fn ik_iterate(
    model: &RobotModel,
    q: &Configuration,
    stacked: &StackedTask,
    settings: &IkSettings,
    k_p: &mut f64,
) -> Result<IterateOutcome, IkError> {
    let n = model.ndof();
    let world = model.link_transforms(q)?;
    let a = model.ik_weighting_in(&world, settings.weighting);
    let (error_before, primary_dq, nullspace) = if stacked.primary.is_empty() {
        (0.0, DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let (jac, dx, _) = stacked_task_errors(model, q, &stacked.primary)?;
        let jbar = dynamically_consistent_pinv(&jac, &a);
        let nullspace = DMatrix::identity(n, n) - &jbar * &jac;
        (dx.norm(), jbar * &dx, nullspace)
    };

    // Posture contribution, projected through the primary nullspace. It is
    // applied outside the k_p gain.
    let posture_dq = match &stacked.posture {
        Some(p) if !p.q_indices.is_empty() => {
            let k = p.q_indices.len();
            let mut jp = DMatrix::zeros(k, n);
            let mut dxp = DVector::zeros(k);
            for (i, &qi) in p.q_indices.iter().enumerate() {
                jp[(i, 6 + qi)] = 1.0;
                dxp[i] = p.nominal[i] - q.joint_positions[qi];
            }
            let jp_n = &jp * &nullspace;
            if jp_n.amax() < 1e-12 {
                DVector::zeros(n)
            } else {
                let mut step = dynamically_consistent_pinv(&jp_n, &a) * (dxp * p.gain);
                let norm = step.norm();
                if norm > p.step_cap {
                    step *= p.step_cap / norm;
                }
                step
            }
        }
        _ => DVector::zeros(n),
    };

    let eval_error = |cand: &Configuration| -> Result<f64, IkError> {
        if stacked.primary.is_empty() {
            return Ok(0.0);
        }
        Ok(task_error_norms(model, cand, &stacked.primary)?.0)
    };

    let mut attempts = 0;
    loop {
        // The posture term scales with the backtracked gain as well: at the
        // initial k_p = 1 the update is the plain two-term resolution, and
        // rejected iterations shrink the whole step so the error contract
        // holds even when the nullspace term fights the primary tasks.
        let dq = (&primary_dq + &posture_dq) * *k_p;
        let candidate = model.integrate(q, &dq)?;
        let error_after = eval_error(&candidate)?;
        if error_after <= error_before + 1e-15 || stacked.primary.is_empty() {
            return Ok(IterateOutcome {
                q_next: candidate,
                error_before,
                error_after,
                dq_norm: dq.norm(),
            });
        }
        attempts += 1;
        *k_p *= settings.beta;
        if attempts >= settings.max_backtracks {
            // No non-increasing candidate: report a null step so the caller's
            // stall detection fires.
            return Ok(IterateOutcome {
                q_next: q.clone(),
                error_before,
                error_after: error_before,
                dq_norm: 0.0,
            });
        }
    }
}

/// Row of the optional convergence debug log.
#[derive(Clone, Copy, Debug)]
pub struct DebugRow {
    pub index: usize,
    pub iteration: usize,
    pub error_norm: f64,
    pub k_p: f64,
}

/// Result of a trajectory solve.
#[derive(Clone, Debug)]
pub struct IkTrajectoryResult {
    pub converged: bool,
    /// Configurations at indices 0..=N (truncated at the failing index).
    pub configurations: Vec<Configuration>,
    /// Stacked primary residual norm at each converged index.
    pub residual_norms: Vec<f64>,
    pub failure: Option<IkFailure>,
    /// Index at which the solve failed (when `failure` is set).
    pub failed_index: Option<usize>,
    pub debug: Vec<DebugRow>,
}

impl IkTrajectoryResult {
    pub fn final_configuration(&self) -> &Configuration {
        self.configurations.last().expect("at least the start configuration")
    }

    /// Columnar debug dump: index, iteration, error norm, k_p.
    pub fn debug_dump(&self) -> String {
        let mut out = String::from("# index iteration error_norm k_p\n");
        for row in &self.debug {
            out.push_str(&format!(
                "{} {} {:.12e} {:.6}\n",
                row.index, row.iteration, row.error_norm, row.k_p
            ));
        }
        out
    }
}

/// Schedule of task targets along a locomanipulation trajectory.
pub struct TrajectoryTasks<'a> {
    pub locomotion: &'a LocomotionTrajectory,
    /// Manipulation path with its progression interval for this solve.
    pub manipulation: Option<(&'a ManipulationPath, f64, f64)>,
    pub posture: Option<PostureTask>,
}

impl TrajectoryTasks<'_> {
    /// Primary task stack at index i of N.
    pub fn stacked_at(&self, i: usize, n: usize) -> Result<StackedTask, IkError> {
        let frac = i as f64 / n as f64;
        let t = frac * self.locomotion.duration();
        let mut primary = vec![
            TaskTarget::Com(self.locomotion.com(t)),
            TaskTarget::Pose(FrameId::LeftFoot, self.locomotion.left_foot(t)),
            TaskTarget::Pose(FrameId::RightFoot, self.locomotion.right_foot(t)),
            TaskTarget::Orientation(FrameId::Pelvis, self.locomotion.pelvis_orientation(t)),
        ];
        if let Some((path, s_o, delta_s)) = self.manipulation {
            let s = (s_o + frac * delta_s).clamp(0.0, 1.0);
            let targets = path.evaluate(s)?;
            if let Some(p) = targets.left {
                primary.push(TaskTarget::Pose(FrameId::LeftHand, p));
            }
            if let Some(p) = targets.right {
                primary.push(TaskTarget::Pose(FrameId::RightHand, p));
            }
        }
        Ok(StackedTask { primary, posture: self.posture.clone() })
    }
}

/// Solve the IK configuration trajectory over the locomotion manifold with an
/// optional manipulation progression `s_o -> s_o + delta_s`.
pub fn solve_ik_trajectory(
    model: &RobotModel,
    q_start: &Configuration,
    tasks: &TrajectoryTasks<'_>,
    settings: &IkSettings,
) -> Result<IkTrajectoryResult, IkError> {
    settings.validate()?;
    model.check_dimension(q_start)?;
    let n = settings.n_steps;
    let mut q = q_start.clone();
    let mut configurations = Vec::with_capacity(n + 1);
    let mut residual_norms = Vec::with_capacity(n + 1);
    let mut debug = Vec::new();

    for i in 0..=n {
        let stacked = tasks.stacked_at(i, n)?;
        let mut iteration = 0;
        loop {
            let (total, norms) = task_error_norms(model, &q, &stacked.primary)?;
            if norms.iter().all(|&e| e < settings.task_tolerance) {
                residual_norms.push(total);
                break;
            }
            if iteration >= settings.max_iterations {
                configurations.push(q.clone());
                return Ok(IkTrajectoryResult {
                    converged: false,
                    configurations,
                    residual_norms,
                    failure: Some(IkFailure::MaxIterations),
                    failed_index: Some(i),
                    debug,
                });
            }
            // Fresh line search each iteration: the gain backtracks only
            // within the retry loop.
            let mut k_p = settings.k_p;
            let outcome = ik_iterate(model, &q, &stacked, settings, &mut k_p)?;
            if settings.collect_debug {
                debug.push(DebugRow { index: i, iteration, error_norm: outcome.error_after, k_p });
            }
            let stalled = outcome.dq_norm < settings.dq_epsilon;
            q = outcome.q_next;
            iteration += 1;
            if stalled {
                configurations.push(q.clone());
                return Ok(IkTrajectoryResult {
                    converged: false,
                    configurations,
                    residual_norms,
                    failure: Some(IkFailure::StalledDq),
                    failed_index: Some(i),
                    debug,
                });
            }
        }
        configurations.push(q.clone());
    }

    Ok(IkTrajectoryResult {
        converged: true,
        configurations,
        residual_norms,
        failure: None,
        failed_index: None,
        debug,
    })
}
