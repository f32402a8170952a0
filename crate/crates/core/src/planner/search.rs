//! Lazy weighted A* over the locomanipulation lattice.
//!
//! Neighbors enter the queue with an optimistic cost (feasibility assumed
//! perfect). When an entry is popped its incoming edge is validated — by the
//! classifier or by solving the IK trajectory — and, if feasible, reinserted
//! with the true Eq.-cost before the vertex may close. With probability
//! epsilon a uniformly random queue element is popped instead of the best.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    edge_cost, heuristic, neighbors, EdgeAction, LatticeConfig, LatticeFrame, PlannerWeights,
    SuggestedPath, Vertex,
};
use crate::feasibility::{
    feasibility_score, stance_pelvis_pose, FeasibilityError, FeasibilityScorer, HandHomePoses,
    ScoreQuery, STEP_IN_PLACE_QUERY_SWING,
};
use crate::geometry::FramePose;
use crate::ik::IkSettings;
use crate::locomotion::{Footstep, GaitParams};
use crate::manipulation::{ManipulationError, ManipulationPath};
use crate::model::{Configuration, RobotModel};
use crate::transition::{Transition, TransitionError};
use crate::Side;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no plan found: the queue was exhausted after {expansions} expansions")]
    NoPlanFound { expansions: usize },
    #[error("start vertex outside the lattice: {0}")]
    StartOutsideLattice(String),
    #[error("reconstruction failed at edge {edge_index}")]
    ReconstructionFailed { edge_index: usize },
    #[error(transparent)]
    Manipulation(#[from] ManipulationError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything an evaluator needs to judge one edge.
pub struct EdgeContext<'a> {
    pub v1: Vertex,
    pub v2: Vertex,
    pub action: EdgeAction,
    pub v1_left: FramePose,
    pub v1_right: FramePose,
    pub v2_left: FramePose,
    pub v2_right: FramePose,
    pub s0: f64,
    pub s1: f64,
    /// Arrival configuration at v1 (present in IK-oracle mode).
    pub q_arrival: Option<&'a Configuration>,
}

/// Evaluator verdict: the feasibility score n(v1, v2) plus, for IK oracles,
/// the solved edge trajectory.
pub struct EdgeVerdict {
    pub feasible: bool,
    pub score: f64,
    pub trajectory: Option<Vec<Configuration>>,
}

pub trait EdgeEvaluator {
    fn evaluate(&mut self, ctx: &EdgeContext<'_>) -> Result<EdgeVerdict, PlanError>;
    /// Whether verdicts come from the IK itself (making reconstruction a
    /// no-op).
    fn is_oracle(&self) -> bool;
}

/// Classifier-backed evaluation: score > 0.5 is assumed feasible.
pub struct ClassifierEvaluator<'a> {
    pub scorer: &'a dyn FeasibilityScorer,
    pub manipulation: &'a ManipulationPath,
    pub home: HandHomePoses,
    pub pelvis_height: f64,
    pub n_m: usize,
}

impl EdgeEvaluator for ClassifierEvaluator<'_> {
    fn evaluate(&mut self, ctx: &EdgeContext<'_>) -> Result<EdgeVerdict, PlanError> {
        let pelvis = stance_pelvis_pose(&ctx.v1_left, &ctx.v1_right, self.pelvis_height);
        let (swing, has_step) = match ctx.action.footstep {
            Some((side, _)) => (side, true),
            None => (STEP_IN_PLACE_QUERY_SWING, false),
        };
        let query = ScoreQuery {
            v1_left: ctx.v1_left,
            v1_right: ctx.v1_right,
            v2_left: ctx.v2_left,
            v2_right: ctx.v2_right,
            swing,
            has_step,
            manipulation: self.manipulation,
            s: ctx.s0,
            delta_s: ctx.s1 - ctx.s0,
            n_m: self.n_m,
            pelvis,
            home: &self.home,
        };
        let score = feasibility_score(self.scorer, &query)?;
        Ok(EdgeVerdict { feasible: score > 0.5, score, trajectory: None })
    }

    fn is_oracle(&self) -> bool {
        false
    }
}

/// IK-oracle evaluation: solve the edge's whole-body trajectory from the
/// parent's arrival configuration.
pub struct IkOracleEvaluator<'a> {
    pub model: &'a RobotModel,
    pub manipulation: &'a ManipulationPath,
    pub gait: GaitParams,
    pub ik: IkSettings,
}

impl EdgeEvaluator for IkOracleEvaluator<'_> {
    fn evaluate(&mut self, ctx: &EdgeContext<'_>) -> Result<EdgeVerdict, PlanError> {
        let q_start = ctx
            .q_arrival
            .ok_or_else(|| PlanError::Invalid("oracle evaluation needs a start configuration".into()))?;
        let transition = Transition {
            left: ctx.v1_left,
            right: ctx.v1_right,
            step: ctx.action.footstep.map(|(side, _)| Footstep {
                side,
                pose: match side {
                    Side::Left => ctx.v2_left,
                    Side::Right => ctx.v2_right,
                },
            }),
            s_start: ctx.s0,
            delta_s: ctx.s1 - ctx.s0,
        };
        let result = transition.solve(self.model, q_start, Some(self.manipulation), &self.gait, &self.ik)?;
        let feasible = result.converged;
        Ok(EdgeVerdict {
            feasible,
            score: if feasible { 1.0 } else { 0.0 },
            trajectory: feasible.then_some(result.configurations),
        })
    }

    fn is_oracle(&self) -> bool {
        true
    }
}

#[derive(Clone)]
struct Entry {
    vertex: Vertex,
    parent: Option<Vertex>,
    action: Option<EdgeAction>,
    g: f64,
    evaluated: bool,
    score: f64,
    trajectory: Option<Vec<Configuration>>,
}

struct HeapItem {
    f: f64,
    order: u64,
    slot: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.order == other.order
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on (f, order) through BinaryHeap's max semantics.
        other
            .f
            .partial_cmp(&self.f)
            .expect("finite priorities")
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Priority queue supporting best-pop and uniform random-pop.
struct OpenList {
    arena: Vec<Option<Entry>>,
    free: Vec<usize>,
    heap: std::collections::BinaryHeap<HeapItem>,
    occupied: Vec<usize>,
    slot_pos: HashMap<usize, usize>,
    counter: u64,
}

impl OpenList {
    fn new() -> Self {
        Self {
            arena: Vec::new(),
            free: Vec::new(),
            heap: std::collections::BinaryHeap::new(),
            occupied: Vec::new(),
            slot_pos: HashMap::new(),
            counter: 0,
        }
    }

    fn push(&mut self, entry: Entry, f: f64) {
        let slot = match self.free.pop() {
            Some(s) => {
                self.arena[s] = Some(entry);
                s
            }
            None => {
                self.arena.push(Some(entry));
                self.arena.len() - 1
            }
        };
        self.slot_pos.insert(slot, self.occupied.len());
        self.occupied.push(slot);
        self.heap.push(HeapItem { f, order: self.counter, slot });
        self.counter += 1;
    }

    fn take_slot(&mut self, slot: usize) -> Entry {
        let entry = self.arena[slot].take().expect("occupied slot");
        let pos = self.slot_pos.remove(&slot).expect("tracked slot");
        let last = self.occupied.pop().expect("non-empty occupied list");
        if last != slot {
            self.occupied[pos] = last;
            self.slot_pos.insert(last, pos);
        }
        self.free.push(slot);
        entry
    }

    fn pop_best(&mut self) -> Option<Entry> {
        while let Some(item) = self.heap.pop() {
            if self.arena.get(item.slot).map(|s| s.is_some()).unwrap_or(false) {
                return Some(self.take_slot(item.slot));
            }
        }
        None
    }

    fn pop_random(&mut self, rng: &mut ChaCha8Rng) -> Option<Entry> {
        if self.occupied.is_empty() {
            return None;
        }
        let pick = rng.gen_range(0..self.occupied.len());
        Some(self.take_slot(self.occupied[pick]))
    }

    fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct PlanMetrics {
    /// Search wall time until the goal vertex closed (s).
    pub time_to_goal_vertex: f64,
    /// IK reconstruction wall time (s); zero in oracle mode.
    pub reconstruction_time: f64,
    pub total_planning_time: f64,
    pub expansions: usize,
    pub edge_evaluations: usize,
}

impl PlanMetrics {
    /// Summary mirroring the planner-performance table layout.
    pub fn report(&self) -> String {
        format!(
            "Time to Goal Vertex (secs) {:.3}\nReconstruction Time (secs) {:.3}\nTotal Planning Time (secs) {:.3}\nExpansions {}\nEdge Evaluations {}\n",
            self.time_to_goal_vertex,
            self.reconstruction_time,
            self.total_planning_time,
            self.expansions,
            self.edge_evaluations
        )
    }
}

/// Result of the graph search, before (or without) reconstruction.
pub struct SearchOutcome {
    pub vertices: Vec<Vertex>,
    pub actions: Vec<EdgeAction>,
    pub edge_costs: Vec<f64>,
    pub edge_scores: Vec<f64>,
    pub total_cost: f64,
    /// Solved edge trajectories (oracle mode only).
    pub edge_trajectories: Vec<Option<Vec<Configuration>>>,
    pub metrics: PlanMetrics,
}

struct Closed {
    g: f64,
    parent: Option<Vertex>,
    action: Option<EdgeAction>,
    cost: f64,
    score: f64,
    trajectory: Option<Vec<Configuration>>,
}

/// The search problem: lattice, frame, weights, manipulation path, and the
/// start state.
pub struct SearchProblem<'a> {
    pub lattice: &'a LatticeConfig,
    pub frame: &'a LatticeFrame,
    pub weights: &'a PlannerWeights,
    pub manipulation: &'a ManipulationPath,
    pub suggested: &'a SuggestedPath,
    /// Arrival configuration at the start vertex (required in oracle mode).
    pub q_start: Option<&'a Configuration>,
}

/// Weighted A* with lazy edge evaluation and epsilon-greedy queue pops.
pub fn search(
    problem: &SearchProblem<'_>,
    start: Vertex,
    evaluator: &mut dyn EdgeEvaluator,
    seed: u64,
) -> Result<SearchOutcome, PlanError> {
    problem.lattice.validate().map_err(PlanError::StartOutsideLattice)?;
    problem.weights.validate().map_err(PlanError::Invalid)?;
    if evaluator.is_oracle() && problem.q_start.is_none() {
        return Err(PlanError::Invalid("oracle mode needs the start configuration".into()));
    }
    let anchor = problem.manipulation.ground_projection(start.s_value(problem.lattice))?;
    for idx in [start.left, start.right] {
        let p = problem.frame.world_pose(idx, problem.lattice);
        let d = ((p.position.x - anchor.position.x).powi(2)
            + (p.position.y - anchor.position.y).powi(2))
        .sqrt();
        if d > problem.lattice.reach_radius {
            return Err(PlanError::StartOutsideLattice(format!(
                "start foot {d:.2} m from the path anchor exceeds the reach radius"
            )));
        }
    }

    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open = OpenList::new();
    let mut closed: HashMap<Vertex, Closed> = HashMap::new();
    let mut metrics = PlanMetrics::default();

    let h0 = heuristic(start.s_value(problem.lattice), problem.weights);
    open.push(
        Entry {
            vertex: start,
            parent: None,
            action: None,
            g: 0.0,
            evaluated: true,
            score: 1.0,
            trajectory: None,
        },
        h0,
    );

    let mut goal: Option<Vertex> = None;
    while !open.is_empty() {
        let entry = if problem.weights.epsilon > 0.0
            && rng.gen_range(0.0..1.0) < problem.weights.epsilon
        {
            open.pop_random(&mut rng)
        } else {
            open.pop_best()
        };
        let Some(entry) = entry else { break };
        if closed.contains_key(&entry.vertex) {
            continue;
        }

        if !entry.evaluated {
            // Validate the incoming edge now that the vertex surfaced.
            let parent = entry.parent.expect("unevaluated entries have parents");
            let action = entry.action.expect("unevaluated entries have actions");
            let parent_info = closed.get(&parent).expect("parents are closed before expansion");
            let ctx = EdgeContext {
                v1: parent,
                v2: entry.vertex,
                action,
                v1_left: problem.frame.world_pose(parent.left, problem.lattice),
                v1_right: problem.frame.world_pose(parent.right, problem.lattice),
                v2_left: problem.frame.world_pose(entry.vertex.left, problem.lattice),
                v2_right: problem.frame.world_pose(entry.vertex.right, problem.lattice),
                s0: parent.s_value(problem.lattice),
                s1: entry.vertex.s_value(problem.lattice),
                q_arrival: parent_info.trajectory.as_ref().and_then(|t| t.last()),
            };
            metrics.edge_evaluations += 1;
            let verdict = evaluator.evaluate(&ctx)?;
            if !verdict.feasible {
                continue;
            }
            // Top the optimistic cost up with the feasibility discount and
            // requeue; the vertex closes only when it surfaces again.
            let g = entry.g + problem.weights.w_d * (1.0 - verdict.score);
            let f = g + heuristic(entry.vertex.s_value(problem.lattice), problem.weights);
            open.push(
                Entry {
                    evaluated: true,
                    g,
                    score: verdict.score,
                    trajectory: verdict.trajectory,
                    ..entry
                },
                f,
            );
            continue;
        }

        // Close the vertex.
        let vertex = entry.vertex;
        let edge_cost_final = match entry.parent {
            Some(p) => entry.g - closed[&p].g,
            None => 0.0,
        };
        let trajectory = if entry.parent.is_none() && evaluator.is_oracle() {
            Some(vec![problem.q_start.expect("checked above").clone()])
        } else {
            entry.trajectory
        };
        closed.insert(
            vertex,
            Closed {
                g: entry.g,
                parent: entry.parent,
                action: entry.action,
                cost: edge_cost_final,
                score: entry.score,
                trajectory,
            },
        );
        metrics.expansions += 1;

        if vertex.is_goal(problem.lattice) {
            goal = Some(vertex);
            break;
        }

        for (action, v2) in neighbors(&vertex, problem.lattice, problem.frame, problem.manipulation)? {
            if closed.contains_key(&v2) {
                continue;
            }
            let r = match action.footstep {
                Some((side, idx)) => {
                    let landing = problem.frame.world_pose(idx, problem.lattice);
                    problem.suggested.deviation(
                        problem.manipulation,
                        v2.s_value(problem.lattice),
                        side,
                        &landing,
                        problem.lattice.angular_weight,
                    )?
                }
                None => 0.0,
            };
            // Optimistic cost: feasibility assumed perfect until evaluated.
            let cost = edge_cost(v2.s_value(problem.lattice), action.has_step(), r, 1.0, problem.weights);
            let g = entry.g + cost;
            let f = g + heuristic(v2.s_value(problem.lattice), problem.weights);
            open.push(
                Entry {
                    vertex: v2,
                    parent: Some(vertex),
                    action: Some(action),
                    g,
                    evaluated: false,
                    score: 1.0,
                    trajectory: None,
                },
                f,
            );
        }
    }

    let goal = goal.ok_or(PlanError::NoPlanFound { expansions: metrics.expansions })?;
    metrics.time_to_goal_vertex = t0.elapsed().as_secs_f64();
    metrics.total_planning_time = metrics.time_to_goal_vertex;

    // Trace the path back through the closed set.
    let mut vertices = vec![goal];
    let mut actions = Vec::new();
    let mut edge_costs = Vec::new();
    let mut edge_scores = Vec::new();
    let mut edge_trajectories = Vec::new();
    let mut cur = goal;
    while let Some(info) = closed.get(&cur) {
        match (info.parent, info.action) {
            (Some(p), Some(a)) => {
                actions.push(a);
                edge_costs.push(info.cost);
                edge_scores.push(info.score);
                edge_trajectories.push(info.trajectory.clone());
                vertices.push(p);
                cur = p;
            }
            _ => break,
        }
    }
    vertices.reverse();
    actions.reverse();
    edge_costs.reverse();
    edge_scores.reverse();
    edge_trajectories.reverse();
    let total_cost = closed[&goal].g;

    Ok(SearchOutcome {
        vertices,
        actions,
        edge_costs,
        edge_scores,
        total_cost,
        edge_trajectories,
        metrics,
    })
}

/// One sample of the reconstructed whole-body trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub s: f64,
    pub q: Configuration,
}

/// The final plan: the contact-transition sequence, the progression
/// trajectory s(t), and the stitched whole-body configuration trajectory.
pub struct PlanResult {
    pub vertices: Vec<Vertex>,
    pub actions: Vec<EdgeAction>,
    pub edge_costs: Vec<f64>,
    pub edge_scores: Vec<f64>,
    pub total_cost: f64,
    /// (start time, footstep) of every contact transition.
    pub footsteps: Vec<(f64, Footstep)>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub duration: f64,
    pub metrics: PlanMetrics,
}

impl PlanResult {
    /// s(t) sampled at the trajectory points.
    pub fn s_of_t(&self) -> Vec<(f64, f64)> {
        self.trajectory.iter().map(|p| (p.t, p.s)).collect()
    }

    /// Structured plan file: vertices, actions, costs, and metrics.
    pub fn plan_file(&self, lattice: &LatticeConfig, frame: &LatticeFrame) -> String {
        let mut out = String::from("# locomanipulation plan\n");
        out.push_str("status found\n");
        out.push_str(&format!("cost {:.9}\n", self.total_cost));
        out.push_str(&format!("vertices {}\n", self.vertices.len()));
        for (i, v) in self.vertices.iter().enumerate() {
            let l = frame.world_pose(v.left, lattice);
            let r = frame.world_pose(v.right, lattice);
            out.push_str(&format!(
                "vertex {} s {:.4} left {:.4} {:.4} {:.4} right {:.4} {:.4} {:.4}\n",
                i,
                v.s_value(lattice),
                l.position.x,
                l.position.y,
                l.yaw(),
                r.position.x,
                r.position.y,
                r.yaw()
            ));
        }
        for (i, a) in self.actions.iter().enumerate() {
            let step = match a.footstep {
                Some((side, idx)) => {
                    let p = frame.world_pose(idx, lattice);
                    format!("{side} {:.4} {:.4} {:.4}", p.position.x, p.position.y, p.yaw())
                }
                None => "none".into(),
            };
            out.push_str(&format!(
                "edge {} ds {:.4} step {} cost {:.9} score {:.6}\n",
                i,
                a.delta_s(lattice),
                step,
                self.edge_costs[i],
                self.edge_scores[i]
            ));
        }
        out
    }

    /// Columnar whole-body trajectory: t, s, base pose (7), joints.
    pub fn trajectory_file(&self) -> String {
        let mut out = String::from("# t s base_x base_y base_z base_qw base_qx base_qy base_qz q0..qn\n");
        for p in &self.trajectory {
            let tr = p.q.base_pose.translation;
            let q = p.q.base_pose.rotation.quaternion();
            out.push_str(&format!(
                "{:.6} {:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                p.t, p.s, tr.x, tr.y, tr.z, q.w, q.i, q.j, q.k
            ));
            for v in p.q.joint_positions.iter() {
                out.push_str(&format!(" {v:.9}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Reconstruct the whole-body trajectory for a search outcome. In classifier
/// mode every edge is re-solved with the IK and any failure aborts with the
/// edge index; in oracle mode the already-verified trajectories are stitched.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    outcome: SearchOutcome,
    model: &RobotModel,
    manipulation: &ManipulationPath,
    gait: &GaitParams,
    ik: &IkSettings,
    lattice: &LatticeConfig,
    frame: &LatticeFrame,
    q_start: &Configuration,
    oracle_mode: bool,
) -> Result<PlanResult, PlanError> {
    let t0 = Instant::now();
    let mut trajectory: Vec<TrajectoryPoint> = Vec::new();
    let mut footsteps: Vec<(f64, Footstep)> = Vec::new();
    let mut t_cursor = 0.0;
    let mut q_cur = q_start.clone();

    for (k, action) in outcome.actions.iter().enumerate() {
        let v1 = outcome.vertices[k];
        let v2 = outcome.vertices[k + 1];
        let s0 = v1.s_value(lattice);
        let s1 = v2.s_value(lattice);
        let transition = Transition {
            left: frame.world_pose(v1.left, lattice),
            right: frame.world_pose(v1.right, lattice),
            step: action.footstep.map(|(side, idx)| Footstep {
                side,
                pose: frame.world_pose(idx, lattice),
            }),
            s_start: s0,
            delta_s: s1 - s0,
        };
        let configs: Vec<Configuration> = if oracle_mode {
            outcome.edge_trajectories[k]
                .clone()
                .ok_or(PlanError::ReconstructionFailed { edge_index: k })?
        } else {
            let res = transition
                .solve(model, &q_cur, Some(manipulation), gait, ik)
                .map_err(|_| PlanError::ReconstructionFailed { edge_index: k })?;
            if !res.converged {
                return Err(PlanError::ReconstructionFailed { edge_index: k });
            }
            res.configurations
        };
        let duration = transition.duration(gait);
        let n = configs.len() - 1;
        if let Some(step) = &transition.step {
            footsteps.push((t_cursor, *step));
        }
        for (i, q) in configs.iter().enumerate() {
            if k > 0 && i == 0 {
                continue; // shared boundary index
            }
            let frac = i as f64 / n.max(1) as f64;
            trajectory.push(TrajectoryPoint {
                t: t_cursor + frac * duration,
                s: s0 + frac * (s1 - s0),
                q: q.clone(),
            });
        }
        q_cur = configs.last().expect("non-empty edge trajectory").clone();
        t_cursor += duration;
    }

    if trajectory.is_empty() {
        trajectory.push(TrajectoryPoint { t: 0.0, s: outcome.vertices[0].s_value(lattice), q: q_cur });
    }

    let mut metrics = outcome.metrics.clone();
    metrics.reconstruction_time = if oracle_mode { 0.0 } else { t0.elapsed().as_secs_f64() };
    metrics.total_planning_time = metrics.time_to_goal_vertex + metrics.reconstruction_time;

    Ok(PlanResult {
        vertices: outcome.vertices,
        actions: outcome.actions,
        edge_costs: outcome.edge_costs,
        edge_scores: outcome.edge_scores,
        total_cost: outcome.total_cost,
        footsteps,
        trajectory,
        duration: t_cursor,
        metrics,
    })
}
