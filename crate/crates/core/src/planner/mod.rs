//! Locomanipulation lattice planning: the R^7 vertex space (manipulation
//! progress plus both foot placements), neighbor generation, edge costs, the
//! suggested body path, and the search heuristic.

mod search;

pub use search::{
    reconstruct, search, ClassifierEvaluator, EdgeContext, EdgeEvaluator, EdgeVerdict,
    IkOracleEvaluator, PlanError, PlanMetrics, PlanResult, SearchOutcome, SearchProblem,
    TrajectoryPoint,
};

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, FramePose};
use crate::manipulation::ManipulationPath;
use crate::Side;

/// Lattice discretization and action-set configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    /// Foot position resolution (m).
    pub xy_resolution: f64,
    /// Foot yaw resolution (rad); must divide the full turn.
    pub theta_resolution: f64,
    /// Progression variable resolution; must divide 1.
    pub s_resolution: f64,
    /// Per-edge progression choices (0 means locomotion-only edges exist).
    pub delta_s_choices: Vec<f64>,
    /// Kinematic reachability limit: both feet must stay within this radius
    /// of the manipulation path's ground projection.
    pub reach_radius: f64,
    pub min_foot_separation: f64,
    pub max_foot_separation: f64,
    /// Stance-relative landing offsets (dx, dy, dyaw) for a left-leg swing;
    /// mirrored automatically for the right leg.
    pub step_offsets: Vec<[f64; 3]>,
    /// Meters-per-radian weight mixing yaw error into the suggested-path
    /// deviation norm.
    pub angular_weight: f64,
}

pub fn default_step_offsets() -> Vec<[f64; 3]> {
    let t = 15f64.to_radians();
    vec![
        [0.0, 0.2, 0.0],
        [0.1, 0.2, 0.0],
        [0.2, 0.2, 0.0],
        [0.3, 0.2, 0.0],
        [-0.1, 0.2, 0.0],
        [-0.2, 0.2, 0.0],
        [0.0, 0.3, 0.0],
        [0.1, 0.3, 0.0],
        [0.0, 0.2, t],
        [0.1, 0.2, t],
        [0.0, 0.2, -t],
        [0.1, 0.2, -t],
    ]
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            xy_resolution: 0.1,
            theta_resolution: 15f64.to_radians(),
            s_resolution: 0.05,
            delta_s_choices: vec![0.0, 0.05, 0.1],
            reach_radius: 1.5,
            min_foot_separation: 0.16,
            max_foot_separation: 0.6,
            step_offsets: default_step_offsets(),
            angular_weight: 0.3,
        }
    }
}

impl LatticeConfig {
    pub fn s_steps(&self) -> i32 {
        (1.0 / self.s_resolution).round() as i32
    }

    pub fn theta_steps(&self) -> i32 {
        (std::f64::consts::TAU / self.theta_resolution).round() as i32
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.xy_resolution <= 0.0 || self.theta_resolution <= 0.0 || self.s_resolution <= 0.0 {
            return Err("lattice resolutions must be positive".into());
        }
        let s_steps = 1.0 / self.s_resolution;
        if (s_steps - s_steps.round()).abs() > 1e-9 {
            return Err("s_resolution must divide 1".into());
        }
        let t_steps = std::f64::consts::TAU / self.theta_resolution;
        if (t_steps - t_steps.round()).abs() > 1e-9 {
            return Err("theta_resolution must divide a full turn".into());
        }
        for &ds in &self.delta_s_choices {
            if ds < 0.0 {
                return Err("delta_s choices must be non-negative".into());
            }
            let steps = ds / self.s_resolution;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err("delta_s choices must be multiples of s_resolution".into());
            }
        }
        if self.step_offsets.is_empty() {
            return Err("step offset template is empty".into());
        }
        Ok(())
    }
}

/// Discretized foot placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FootIdx {
    pub x: i32,
    pub y: i32,
    pub theta: i32,
}

/// Lattice state: progression index plus both foot placements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub s: i32,
    pub left: FootIdx,
    pub right: FootIdx,
}

impl Vertex {
    pub fn s_value(&self, lattice: &LatticeConfig) -> f64 {
        (self.s as f64 * lattice.s_resolution).min(1.0)
    }

    pub fn foot(&self, side: Side) -> FootIdx {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    pub fn with_foot(mut self, side: Side, idx: FootIdx) -> Self {
        match side {
            Side::Left => self.left = idx,
            Side::Right => self.right = idx,
        }
        self
    }

    pub fn is_goal(&self, lattice: &LatticeConfig) -> bool {
        self.s >= lattice.s_steps()
    }
}

/// The lattice's anchor frame on the ground plane; vertices are discretized
/// from the robot's starting position.
#[derive(Clone, Copy, Debug)]
pub struct LatticeFrame {
    origin: FramePose,
}

impl LatticeFrame {
    /// Anchor the lattice at the start midfeet frame.
    pub fn from_start(left: &FramePose, right: &FramePose) -> Self {
        let mid = crate::locomotion::support_center(left, right);
        let yaw = left.yaw() + 0.5 * wrap_angle(right.yaw() - left.yaw());
        Self { origin: FramePose::from_xy_yaw(mid.x, mid.y, yaw) }
    }

    pub fn world_pose(&self, idx: FootIdx, lattice: &LatticeConfig) -> FramePose {
        let local = FramePose::from_xy_yaw(
            idx.x as f64 * lattice.xy_resolution,
            idx.y as f64 * lattice.xy_resolution,
            idx.theta as f64 * lattice.theta_resolution,
        );
        let iso = self.origin.to_isometry() * local.to_isometry();
        let p = FramePose::from_isometry(&iso);
        FramePose::from_xy_yaw(p.position.x, p.position.y, p.yaw())
    }

    pub fn snap(&self, pose: &FramePose, lattice: &LatticeConfig) -> FootIdx {
        let rel = pose.relative_to(&self.origin);
        let theta_steps = lattice.theta_steps();
        let mut t = (wrap_angle(rel.yaw()) / lattice.theta_resolution).round() as i32;
        t = t.rem_euclid(theta_steps);
        if t > theta_steps / 2 {
            t -= theta_steps;
        }
        FootIdx {
            x: (rel.position.x / lattice.xy_resolution).round() as i32,
            y: (rel.position.y / lattice.xy_resolution).round() as i32,
            theta: t,
        }
    }
}

/// An edge: a manipulation progression and/or one footstep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeAction {
    pub delta_s_steps: i32,
    pub footstep: Option<(Side, FootIdx)>,
}

impl EdgeAction {
    pub fn delta_s(&self, lattice: &LatticeConfig) -> f64 {
        self.delta_s_steps as f64 * lattice.s_resolution
    }

    pub fn has_step(&self) -> bool {
        self.footstep.is_some()
    }
}

/// Weights of the edge cost and heuristic.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerWeights {
    pub w_s: f64,
    pub w_step: f64,
    pub w_l: f64,
    pub w_d: f64,
    pub w_h: f64,
    pub epsilon: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self { w_s: 10.0, w_step: 1.0, w_l: 1.0, w_d: 5.0, w_h: 3.0, epsilon: 0.1 }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("w_s", self.w_s),
            ("w_step", self.w_step),
            ("w_l", self.w_l),
            ("w_d", self.w_d),
            ("w_h", self.w_h),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be non-negative"));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err("epsilon must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Edge transition cost: progress shortfall at the target vertex, a flat
/// per-footstep charge, the suggested-body-path deviation, and the
/// feasibility discount.
pub fn edge_cost(v2_s: f64, has_step: bool, r: f64, n: f64, w: &PlannerWeights) -> f64 {
    w.w_s * (1.0 - v2_s)
        + if has_step { w.w_step } else { 0.0 }
        + w.w_l * r
        + w.w_d * (1.0 - n)
}

/// Search heuristic: weighted remaining progress.
pub fn heuristic(s: f64, w: &PlannerWeights) -> f64 {
    w.w_h * (w.w_s * (1.0 - s))
}

/// Fixed transforms from the manipulation path's initial ground projection to
/// each starting foot pose; the suggested body path drags the starting stance
/// along f(s).
#[derive(Clone, Copy, Debug)]
pub struct SuggestedPath {
    t_left: nalgebra::Isometry3<f64>,
    t_right: nalgebra::Isometry3<f64>,
}

impl SuggestedPath {
    pub fn new(
        manipulation: &ManipulationPath,
        start_left: &FramePose,
        start_right: &FramePose,
    ) -> Result<Self, crate::manipulation::ManipulationError> {
        let f0 = manipulation.ground_projection(0.0)?.to_isometry();
        Ok(Self {
            t_left: f0.inverse() * start_left.to_isometry(),
            t_right: f0.inverse() * start_right.to_isometry(),
        })
    }

    /// Suggested pose for `side`'s foot at progression s.
    pub fn suggested(
        &self,
        manipulation: &ManipulationPath,
        s: f64,
        side: Side,
    ) -> Result<FramePose, crate::manipulation::ManipulationError> {
        let fs = manipulation.ground_projection(s)?.to_isometry();
        let t = match side {
            Side::Left => self.t_left,
            Side::Right => self.t_right,
        };
        let p = FramePose::from_isometry(&(fs * t));
        Ok(FramePose::from_xy_yaw(p.position.x, p.position.y, p.yaw()))
    }

    /// r(v2): deviation of a landing pose from the suggested pose, yaw mixed
    /// in at `angular_weight` meters per radian. Zero for step-free actions.
    pub fn deviation(
        &self,
        manipulation: &ManipulationPath,
        s: f64,
        side: Side,
        landing: &FramePose,
        angular_weight: f64,
    ) -> Result<f64, crate::manipulation::ManipulationError> {
        let sugg = self.suggested(manipulation, s, side)?;
        let dx = landing.position.x - sugg.position.x;
        let dy = landing.position.y - sugg.position.y;
        let dyaw = wrap_angle(landing.yaw() - sugg.yaw());
        Ok((dx * dx + dy * dy + (angular_weight * dyaw).powi(2)).sqrt())
    }
}

fn feet_valid(left: &FramePose, right: &FramePose, lattice: &LatticeConfig) -> bool {
    let d = ((left.position.x - right.position.x).powi(2)
        + (left.position.y - right.position.y).powi(2))
    .sqrt();
    if d < lattice.min_foot_separation || d > lattice.max_foot_separation {
        return false;
    }
    // No crossover: each foot stays on its own side of the other.
    let l_in_r = left.relative_to(right);
    if l_in_r.position.y < 0.5 * lattice.min_foot_separation {
        return false;
    }
    let r_in_l = right.relative_to(left);
    if r_in_l.position.y > -0.5 * lattice.min_foot_separation {
        return false;
    }
    true
}

/// Generate the neighbor set of a vertex: the product of progression choices
/// and footstep choices (including "no step"), minus the identity, pruned by
/// the reachability radius and foot-placement validity.
pub fn neighbors(
    v: &Vertex,
    lattice: &LatticeConfig,
    frame: &LatticeFrame,
    manipulation: &ManipulationPath,
) -> Result<Vec<(EdgeAction, Vertex)>, crate::manipulation::ManipulationError> {
    let s_steps = lattice.s_steps();
    let mut ds_steps: Vec<i32> = lattice
        .delta_s_choices
        .iter()
        .map(|ds| (ds / lattice.s_resolution).round() as i32)
        .collect();
    ds_steps.sort_unstable();
    ds_steps.dedup();

    // Footstep choices: none, or one leg to one template offset.
    let mut steps: Vec<Option<(Side, FootIdx)>> = vec![None];
    for side in [Side::Left, Side::Right] {
        let stance = v.foot(side.opposite());
        let stance_pose = frame.world_pose(stance, lattice);
        for off in &lattice.step_offsets {
            let (dy, dyaw) = match side {
                Side::Left => (off[1], off[2]),
                Side::Right => (-off[1], -off[2]),
            };
            let local = FramePose::from_xy_yaw(off[0], dy, dyaw);
            let world = FramePose::from_isometry(&(stance_pose.to_isometry() * local.to_isometry()));
            let world = FramePose::from_xy_yaw(world.position.x, world.position.y, world.yaw());
            let idx = frame.snap(&world, lattice);
            steps.push(Some((side, idx)));
        }
    }

    let mut out: Vec<(EdgeAction, Vertex)> = Vec::new();
    let mut seen: std::collections::HashSet<(Vertex, Option<(Side, FootIdx)>)> =
        std::collections::HashSet::new();
    for &ds in &ds_steps {
        for step in &steps {
            if ds == 0 && step.is_none() {
                continue; // identity
            }
            let s2 = (v.s + ds).min(s_steps);
            let mut v2 = Vertex { s: s2, ..*v };
            if let Some((side, idx)) = step {
                v2 = v2.with_foot(*side, *idx);
            }
            if v2 == *v {
                continue;
            }
            if !seen.insert((v2, *step)) {
                continue; // duplicate after capping s
            }
            let left = frame.world_pose(v2.left, lattice);
            let right = frame.world_pose(v2.right, lattice);
            if step.is_some() && !feet_valid(&left, &right, lattice) {
                continue;
            }
            // Kinematic reachability: both feet within the radius of the
            // manipulation path's ground projection at the new s.
            let anchor = manipulation.ground_projection(v2.s_value(lattice))?;
            let within = |p: &FramePose| {
                ((p.position.x - anchor.position.x).powi(2)
                    + (p.position.y - anchor.position.y).powi(2))
                .sqrt()
                    <= lattice.reach_radius
            };
            if !within(&left) || !within(&right) {
                continue;
            }
            out.push((
                EdgeAction { delta_s_steps: s2 - v.s, footstep: *step },
                v2,
            ));
        }
    }
    Ok(out)
}
