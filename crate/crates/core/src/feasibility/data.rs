//! Training-data generation for the feasibility classifier. Each sample is a
//! random contact transition with a fixed manipulator pose, labeled by
//! whether the whole-body IK trajectory converges.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeasibilityError, FeatureVector, HandHomePoses, TransitionQuery};
use crate::geometry::FramePose;
use crate::ik::{solve_ik_trajectory, IkSettings, PostureTask, TaskTarget, TrajectoryTasks};
use crate::locomotion::{assemble_standstill, Footstep, GaitParams, InitialState};
use crate::manipulation::{ManipulationPath, ManipulationType};
use crate::model::{Configuration, FrameId, InertiaWeighting, RobotModel};
use crate::transition::Transition;
use crate::Side;

/// One of the six contact-transition categories: swing leg x manipulation type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransitionKind {
    pub swing: Side,
    pub manipulation_type: ManipulationType,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 6] = [
        TransitionKind { swing: Side::Left, manipulation_type: ManipulationType::LeftHand },
        TransitionKind { swing: Side::Left, manipulation_type: ManipulationType::RightHand },
        TransitionKind { swing: Side::Left, manipulation_type: ManipulationType::BothHands },
        TransitionKind { swing: Side::Right, manipulation_type: ManipulationType::LeftHand },
        TransitionKind { swing: Side::Right, manipulation_type: ManipulationType::RightHand },
        TransitionKind { swing: Side::Right, manipulation_type: ManipulationType::BothHands },
    ];
}

/// Sampling bounds for the training-data generator. Landing offsets are
/// expressed in the stance-foot frame with y pointing toward the swing side;
/// the sign flip for right-leg swings is applied internally.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleBounds {
    pub landing_dx: (f64, f64),
    /// Lateral landing offset magnitude (always away from the stance foot).
    pub landing_dy: (f64, f64),
    pub landing_dyaw: (f64, f64),
    /// Pelvis height range (absolute, m).
    pub pelvis_z: (f64, f64),
    /// Fraction of each arm joint's limit range used for sampling.
    pub arm_range_scale: f64,
    /// Fraction of each torso joint's limit range used for sampling.
    pub torso_range_scale: f64,
}

impl Default for SampleBounds {
    fn default() -> Self {
        Self {
            landing_dx: (-0.25, 0.35),
            landing_dy: (0.14, 0.38),
            landing_dyaw: (-0.45, 0.45),
            pelvis_z: (0.88, 1.0),
            arm_range_scale: 0.85,
            torso_range_scale: 0.4,
        }
    }
}

/// A labeled training example.
#[derive(Clone, Debug)]
pub struct LabeledExample {
    pub features: FeatureVector,
    /// Whether the IK trajectory for the transition converged.
    pub label: bool,
    pub swing: Side,
    pub manipulation_type: ManipulationType,
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Sample a stance-relative foot pose from the bounds; `sign` flips the
/// lateral axis for right-leg swings.
fn sample_foot_offset(rng: &mut ChaCha8Rng, bounds: &SampleBounds, sign: f64) -> FramePose {
    let dx = sample_range(rng, bounds.landing_dx);
    let dy = sign * sample_range(rng, bounds.landing_dy);
    let dyaw = sign * sample_range(rng, bounds.landing_dyaw);
    FramePose::from_xy_yaw(dx, dy, dyaw)
}

fn compose_ground(stance: &FramePose, offset: &FramePose) -> FramePose {
    let iso = stance.to_isometry() * offset.to_isometry();
    let p = FramePose::from_isometry(&iso);
    FramePose::from_xy_yaw(p.position.x, p.position.y, p.yaw())
}

/// Seed configuration for a sampled stance: base fixed at the sampled pelvis
/// pose, upper body sampled, legs solved to the feet with identity weighting
/// so the sampled joints stay put.
fn stance_seed_configuration(
    model: &RobotModel,
    left: &FramePose,
    right: &FramePose,
    pelvis: &FramePose,
    upper_body: &[(usize, f64)],
    ik: &IkSettings,
) -> Option<Configuration> {
    let mut q = model.nominal_configuration();
    q.base_pose = pelvis.to_isometry();
    for &(qi, val) in upper_body {
        q.joint_positions[qi] = val;
    }
    q = model.clamp_configuration(&q).ok()?;

    // Legs-only placement: feet plus a pelvis pose task that pins the base.
    let targets = vec![
        TaskTarget::Pose(FrameId::LeftFoot, *left),
        TaskTarget::Pose(FrameId::RightFoot, *right),
        TaskTarget::Pose(FrameId::Pelvis, *pelvis),
    ];
    let mut settings = *ik;
    settings.weighting = InertiaWeighting::Identity;
    settings.n_steps = 1;
    settings.max_iterations = 150;
    // A posture task holding the sampled torso keeps the upper body in place.
    let posture = PostureTask {
        q_indices: model.torso_group.clone(),
        nominal: model.torso_group.iter().map(|&qi| q.joint_positions[qi]).collect(),
        gain: PostureTask::DEFAULT_GAIN,
        step_cap: PostureTask::DEFAULT_STEP_CAP,
    };
    let stacked = crate::ik::StackedTask { primary: targets, posture: Some(posture) };
    let mut cur = q;
    for _ in 0..settings.max_iterations {
        let (_, _, norms) =
            crate::ik::stacked_task_errors(model, &cur, &stacked.primary).ok()?;
        if norms.iter().all(|&e| e < settings.task_tolerance) {
            return Some(cur);
        }
        let mut k_p = settings.k_p;
        let out = crate::ik::ik_iterate(model, &cur, &stacked, &settings, &mut k_p).ok()?;
        if out.dq_norm < settings.dq_epsilon {
            return None;
        }
        cur = out.q_next;
    }
    None
}

/// Generate one labeled example. Deterministic given the seed.
pub fn sample_training_example(
    model: &RobotModel,
    bounds: &SampleBounds,
    gait: &GaitParams,
    ik: &IkSettings,
    kind: TransitionKind,
    seed: u64,
) -> Result<LabeledExample, FeasibilityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let home = HandHomePoses::from_model(model)?;
    let stance_side = kind.swing.opposite();
    let sign = match kind.swing {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };

    // Stance foot at the origin; swing start and landing sampled around it.
    let stance_foot = FramePose::identity();
    let swing_start = compose_ground(&stance_foot, &sample_foot_offset(&mut rng, bounds, sign));
    let swing_land = compose_ground(&stance_foot, &sample_foot_offset(&mut rng, bounds, sign));

    let (left0, right0) = match kind.swing {
        Side::Left => (swing_start, stance_foot),
        Side::Right => (stance_foot, swing_start),
    };

    // Pelvis position on the segment between the foot origins, yaw between
    // the foot yaws, sampled height.
    let alpha = rng.gen_range(0.0..1.0);
    let p0 = Vector2::new(left0.position.x, left0.position.y);
    let p1 = Vector2::new(right0.position.x, right0.position.y);
    let pxy = p0 + (p1 - p0) * alpha;
    let yaw_mix = rng.gen_range(0.0..1.0);
    let yaw = left0.yaw() + (crate::geometry::wrap_angle(right0.yaw() - left0.yaw())) * yaw_mix;
    let pelvis = FramePose::new(
        Vector3::new(pxy.x, pxy.y, sample_range(&mut rng, bounds.pelvis_z)),
        UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
    );

    // Random upper body: manipulating arm(s) plus torso.
    let mut upper = Vec::new();
    for (qi, &ji) in model.revolute_joints.iter().enumerate() {
        let joint = &model.joints[ji];
        let (is_arm_left, is_arm_right) =
            (joint.name.starts_with("l_") && is_arm_joint(&joint.name),
             joint.name.starts_with("r_") && is_arm_joint(&joint.name));
        let is_torso = model.torso_group.contains(&qi);
        let sample_it = (is_arm_left && kind.manipulation_type.uses(Side::Left))
            || (is_arm_right && kind.manipulation_type.uses(Side::Right))
            || is_torso;
        if sample_it {
            let scale = if is_torso { bounds.torso_range_scale } else { bounds.arm_range_scale };
            let (lo, hi) = joint.limits;
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * scale;
            upper.push((qi, rng.gen_range(mid - half..mid + half)));
        }
    }

    let q0 = stance_seed_configuration(model, &left0, &right0, &pelvis, &upper, ik);

    // Manipulator pose(s): forward kinematics of the sampled configuration
    // for manipulating hands, home pose for the rest.
    let (left_hand, right_hand, label) = match &q0 {
        Some(q) => {
            let lh = if kind.manipulation_type.uses(Side::Left) {
                model.frame_pose(q, FrameId::LeftHand)?
            } else {
                home.world(Side::Left, &pelvis)
            };
            let rh = if kind.manipulation_type.uses(Side::Right) {
                model.frame_pose(q, FrameId::RightHand)?
            } else {
                home.world(Side::Right, &pelvis)
            };
            // Label by the transition IK with the manipulator held fixed.
            let path = match kind.manipulation_type {
                ManipulationType::LeftHand => {
                    ManipulationPath::fixed_pose(ManipulationType::LeftHand, lh)
                }
                ManipulationType::RightHand => {
                    ManipulationPath::fixed_pose(ManipulationType::RightHand, rh)
                }
                ManipulationType::BothHands => ManipulationPath::fixed_pose_bimanual(lh, rh),
            };
            let transition = Transition {
                left: left0,
                right: right0,
                step: Some(Footstep { side: kind.swing, pose: swing_land }),
                s_start: 0.0,
                delta_s: 0.0,
            };
            let label = transition
                .solve(model, q, Some(&path), gait, ik)
                .map(|r| r.converged)
                .unwrap_or(false);
            (lh, rh, label)
        }
        // The sampled stance itself is unreachable: infeasible transition.
        None => {
            (home.world(Side::Left, &pelvis), home.world(Side::Right, &pelvis), false)
        }
    };

    let query = TransitionQuery {
        swing: kind.swing,
        stance_foot: match stance_side {
            Side::Left => left0,
            Side::Right => right0,
        },
        swing_start,
        swing_land,
        pelvis,
        left_hand,
        right_hand,
        manipulation_type: kind.manipulation_type,
    };
    let features = query.features();
    features.validate()?;
    Ok(LabeledExample { features, label, swing: kind.swing, manipulation_type: kind.manipulation_type })
}

fn is_arm_joint(name: &str) -> bool {
    name.contains("shoulder") || name.contains("elbow") || name.contains("forearm")
        || name.contains("wrist")
}

/// Per-sample rng stream derived from the master seed and sample index, so
/// generation parallelizes without changing results.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    // splitmix64 step.
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generate `count` examples stratified across the six transition types.
/// Deterministic given the seed regardless of thread count.
pub fn generate_dataset(
    model: &RobotModel,
    bounds: &SampleBounds,
    gait: &GaitParams,
    ik: &IkSettings,
    count: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<Vec<LabeledExample>, FeasibilityError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| FeasibilityError::Training(format!("thread pool: {e}")))?;
    let results: Result<Vec<LabeledExample>, FeasibilityError> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let kind = TransitionKind::ALL[i % TransitionKind::ALL.len()];
                sample_training_example(model, bounds, gait, ik, kind, sample_seed(master_seed, i as u64))
            })
            .collect()
    });
    results
}

/// Columnar dataset serialization: 32 feature columns, label, swing leg,
/// manipulation type.
pub fn dataset_to_string(examples: &[LabeledExample]) -> String {
    let mut out = String::from("# f0..f31 label swing manip\n");
    for e in examples {
        for v in e.features.as_slice() {
            out.push_str(&format!("{v:.9} "));
        }
        out.push_str(&format!(
            "{} {} {}\n",
            if e.label { 1 } else { 0 },
            e.swing,
            e.manipulation_type
        ));
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Vec<LabeledExample>, FeasibilityError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != super::FEATURE_DIM + 3 {
            return Err(FeasibilityError::Training(format!(
                "line {}: expected {} columns, got {}",
                i + 1,
                super::FEATURE_DIM + 3,
                cols.len()
            )));
        }
        let mut f = [0.0; super::FEATURE_DIM];
        for (j, v) in f.iter_mut().enumerate() {
            *v = cols[j]
                .parse()
                .map_err(|e| FeasibilityError::Training(format!("line {}: {e}", i + 1)))?;
        }
        let label = cols[super::FEATURE_DIM] == "1";
        let swing = match cols[super::FEATURE_DIM + 1] {
            "left" => Side::Left,
            "right" => Side::Right,
            other => {
                return Err(FeasibilityError::Training(format!(
                    "line {}: bad swing '{other}'",
                    i + 1
                )))
            }
        };
        let manipulation_type = match cols[super::FEATURE_DIM + 2] {
            "left" => ManipulationType::LeftHand,
            "right" => ManipulationType::RightHand,
            "both" => ManipulationType::BothHands,
            other => {
                return Err(FeasibilityError::Training(format!(
                    "line {}: bad manipulation type '{other}'",
                    i + 1
                )))
            }
        };
        out.push(LabeledExample { features: FeatureVector(f), label, swing, manipulation_type });
    }
    Ok(out)
}

/// Standing configuration helper shared by the grid/label tooling: nominal
/// posture, base over the midfeet point, settled onto the manifold.
pub fn settled_standing(
    model: &RobotModel,
    left: &FramePose,
    right: &FramePose,
    gait: &GaitParams,
    ik: &IkSettings,
) -> Option<Configuration> {
    let mut q = model.nominal_configuration();
    let sole_z = model.frame_pose(&q, FrameId::LeftFoot).ok()?.position.z;
    let mid = crate::locomotion::support_center(left, right);
    q.base_pose = Isometry3::from_parts(
        Translation3::new(mid.x, mid.y, -sole_z),
        crate::locomotion::pelvis_orientation(left, right),
    );
    let init = InitialState::standing(*left, *right);
    let standstill = assemble_standstill(&init, 1.0, gait).ok()?;
    let tasks = TrajectoryTasks {
        locomotion: &standstill,
        manipulation: None,
        posture: Some(PostureTask::torso_nominal(model)),
    };
    let settings = IkSettings { n_steps: 1, ..*ik };
    let res = solve_ik_trajectory(model, &q, &tasks, &settings).ok()?;
    res.converged.then(|| res.final_configuration().clone())
}
