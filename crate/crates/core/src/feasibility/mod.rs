//! Learned locomanipulability: contact-transition feature extraction, the
//! feasibility classifier, IK-labeled training data, and region-grid export.

mod data;
mod mlp;
mod region;

pub use data::{
    dataset_to_string, generate_dataset, parse_dataset, sample_seed, sample_training_example,
    settled_standing, LabeledExample, SampleBounds, TransitionKind,
};
pub use mlp::{train, MlpModel, TrainMetrics, TrainSettings};
pub use region::{
    foot_region_grid, hand_region_grid, FootGridSpec, GridCell, HandGridEvaluator, HandGridSpec,
    RegionGrid,
};

use thiserror::Error;

use crate::geometry::FramePose;
use crate::manipulation::{ManipulationError, ManipulationPath, ManipulationType};
use crate::model::{ModelError, RobotModel};
use crate::Side;

/// The step-in-place transitions queried for manipulation-only decisions
/// always swing this leg, so scores are deterministic.
pub const STEP_IN_PLACE_QUERY_SWING: Side = Side::Right;

pub const FEATURE_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error("ill-defined stance: the {0} stance foot moved between vertices")]
    IllDefinedStance(Side),
    #[error("feature vector has a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Manipulation(#[from] ManipulationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("empty region grid")]
    EmptyGrid,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The classifier input: 32 scalars in a fixed order, all pose blocks
/// expressed in the stance-foot frame as (x, y, z, roll, pitch, yaw).
///
/// Layout: stance leg (1), manipulation type (1), pelvis pose (6),
/// swing start pose (6), swing landing pose (6), left hand pose (6),
/// right hand pose (6).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn validate(&self) -> Result<(), FeasibilityError> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(FeasibilityError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn stance_leg(&self) -> Side {
        if self.0[0] < 0.5 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

fn pose_6d(pose: &FramePose, stance: &FramePose) -> [f64; 6] {
    let rel = pose.relative_to(stance);
    let (roll, pitch, yaw) = rel.orientation.euler_angles();
    [rel.position.x, rel.position.y, rel.position.z, roll, pitch, yaw]
}

/// Everything that identifies one contact transition for the classifier.
#[derive(Clone, Copy, Debug)]
pub struct TransitionQuery {
    /// Which leg swings; the other is the stance leg and the feature frame.
    pub swing: Side,
    pub stance_foot: FramePose,
    pub swing_start: FramePose,
    pub swing_land: FramePose,
    pub pelvis: FramePose,
    pub left_hand: FramePose,
    pub right_hand: FramePose,
    pub manipulation_type: ManipulationType,
}

impl TransitionQuery {
    pub fn features(&self) -> FeatureVector {
        let stance_side = self.swing.opposite();
        let mut f = [0.0; FEATURE_DIM];
        f[0] = match stance_side {
            Side::Left => 0.0,
            Side::Right => 1.0,
        };
        f[1] = self.manipulation_type.encoding();
        f[2..8].copy_from_slice(&pose_6d(&self.pelvis, &self.stance_foot));
        f[8..14].copy_from_slice(&pose_6d(&self.swing_start, &self.stance_foot));
        f[14..20].copy_from_slice(&pose_6d(&self.swing_land, &self.stance_foot));
        f[20..26].copy_from_slice(&pose_6d(&self.left_hand, &self.stance_foot));
        f[26..32].copy_from_slice(&pose_6d(&self.right_hand, &self.stance_foot));
        FeatureVector(f)
    }
}

/// Nominal hand poses relative to the pelvis, used for hands that are not
/// manipulating.
#[derive(Clone, Copy, Debug)]
pub struct HandHomePoses {
    left: nalgebra::Isometry3<f64>,
    right: nalgebra::Isometry3<f64>,
}

impl HandHomePoses {
    pub fn from_model(model: &RobotModel) -> Result<Self, ModelError> {
        Ok(Self {
            left: model.nominal_hand_in_pelvis(crate::model::FrameId::LeftHand)?,
            right: model.nominal_hand_in_pelvis(crate::model::FrameId::RightHand)?,
        })
    }

    pub fn world(&self, side: Side, pelvis: &FramePose) -> FramePose {
        let local = match side {
            Side::Left => self.left,
            Side::Right => self.right,
        };
        FramePose::from_isometry(&(pelvis.to_isometry() * local))
    }
}

/// Assemble the classifier features for a vertex pair.
///
/// `swing` names the moving leg (for step-in-place transitions the vertices
/// are identical, so the caller must say which leg the query swings); the
/// other leg must not move between `v1` and `v2`. Manipulating hands take
/// their targets from `f(s)`; a hand that is not manipulating uses its
/// pelvis-relative home pose.
#[allow(clippy::too_many_arguments)]
pub fn extract_features(
    v1_left: &FramePose,
    v1_right: &FramePose,
    v2_left: &FramePose,
    v2_right: &FramePose,
    swing: Side,
    manipulation: &ManipulationPath,
    s: f64,
    pelvis: &FramePose,
    home: &HandHomePoses,
) -> Result<FeatureVector, FeasibilityError> {
    let stance_side = swing.opposite();
    let (stance1, stance2) = match stance_side {
        Side::Left => (v1_left, v2_left),
        Side::Right => (v1_right, v2_right),
    };
    if (stance1.position - stance2.position).norm() > 1e-9
        || stance1.orientation.angle_to(&stance2.orientation) > 1e-9
    {
        return Err(FeasibilityError::IllDefinedStance(stance_side));
    }
    let (swing_start, swing_land) = match swing {
        Side::Left => (v1_left, v2_left),
        Side::Right => (v1_right, v2_right),
    };
    let targets = manipulation.evaluate(s)?;
    let kind = manipulation.manipulation_type();
    let left_hand = match targets.left {
        Some(p) if kind.uses(Side::Left) => p,
        _ => home.world(Side::Left, pelvis),
    };
    let right_hand = match targets.right {
        Some(p) if kind.uses(Side::Right) => p,
        _ => home.world(Side::Right, pelvis),
    };
    let query = TransitionQuery {
        swing,
        stance_foot: *stance1,
        swing_start: *swing_start,
        swing_land: *swing_land,
        pelvis: *pelvis,
        left_hand,
        right_hand,
        manipulation_type: kind,
    };
    let features = query.features();
    features.validate()?;
    Ok(features)
}

/// Anything that maps a feature vector to a feasibility score in (0, 1).
pub trait FeasibilityScorer {
    fn score(&self, features: &FeatureVector) -> f64;
}

/// One feasibility query over an edge.
#[derive(Clone, Copy, Debug)]
pub struct ScoreQuery<'a> {
    pub v1_left: FramePose,
    pub v1_right: FramePose,
    pub v2_left: FramePose,
    pub v2_right: FramePose,
    /// Swing leg of the footstep, or of the step-in-place query when the
    /// edge has no footstep.
    pub swing: Side,
    /// Whether the edge takes a footstep.
    pub has_step: bool,
    pub manipulation: &'a ManipulationPath,
    pub s: f64,
    pub delta_s: f64,
    /// Discretization count for moving-manipulator edges.
    pub n_m: usize,
    pub pelvis: FramePose,
    pub home: &'a HandHomePoses,
}

/// The feasibility score n(v1, v2): one classifier query when the
/// manipulator pose is fixed, otherwise the minimum over N_m equidistant
/// points of [s, s + delta_s]. Edges without a footstep are queried as
/// step-in-place transitions at each point.
pub fn feasibility_score<S: FeasibilityScorer + ?Sized>(
    scorer: &S,
    query: &ScoreQuery<'_>,
) -> Result<f64, FeasibilityError> {
    let features_at = |s: f64| -> Result<FeatureVector, FeasibilityError> {
        if query.has_step {
            extract_features(
                &query.v1_left,
                &query.v1_right,
                &query.v2_left,
                &query.v2_right,
                query.swing,
                query.manipulation,
                s,
                &query.pelvis,
                query.home,
            )
        } else {
            // Step-in-place query at the source stance.
            extract_features(
                &query.v1_left,
                &query.v1_right,
                &query.v1_left,
                &query.v1_right,
                query.swing,
                query.manipulation,
                s,
                &query.pelvis,
                query.home,
            )
        }
    };
    if query.delta_s == 0.0 {
        return Ok(scorer.score(&features_at(query.s)?));
    }
    assert!(query.n_m >= 1, "n_m must be at least 1");
    let mut lowest = f64::INFINITY;
    for i in 1..=query.n_m {
        let s = (query.s + query.delta_s * i as f64 / query.n_m as f64).clamp(0.0, 1.0);
        lowest = lowest.min(scorer.score(&features_at(s)?));
    }
    Ok(lowest)
}

/// Pelvis pose implied by a standing stance: midfeet position at the pelvis
/// height, yaw-midpoint orientation.
pub fn stance_pelvis_pose(left: &FramePose, right: &FramePose, pelvis_height: f64) -> FramePose {
    let mid = crate::locomotion::support_center(left, right);
    let ori = crate::locomotion::pelvis_orientation(left, right);
    FramePose::new(nalgebra::Vector3::new(mid.x, mid.y, pelvis_height), ori)
}

/// Pelvis height of the model at its nominal standing posture (soles on the
/// ground).
pub fn nominal_pelvis_height(model: &RobotModel) -> Result<f64, ModelError> {
    let q = model.nominal_configuration();
    let sole = model.frame_pose(&q, crate::model::FrameId::LeftFoot)?.position.z;
    Ok(-sole)
}

impl FeasibilityScorer for MlpModel {
    fn score(&self, features: &FeatureVector) -> f64 {
        self.forward(features)
    }
}

/// Test and benchmarking helper: a scorer with a constant output.
pub struct ConstantScorer(pub f64);

impl FeasibilityScorer for ConstantScorer {
    fn score(&self, _features: &FeatureVector) -> f64 {
        self.0
    }
}

#[cfg(test)]
pub(crate) fn yaw_quat(yaw: f64) -> nalgebra::UnitQuaternion<f64> {
    nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manipulation;
    use nalgebra::Vector3;
    use std::cell::Cell;

    fn humanoid() -> RobotModel {
        RobotModel::from_description(crate::REDUCED_HUMANOID).unwrap()
    }

    struct CountingScorer<'a> {
        count: &'a Cell<usize>,
        value: f64,
    }

    impl FeasibilityScorer for CountingScorer<'_> {
        fn score(&self, _f: &FeatureVector) -> f64 {
            self.count.set(self.count.get() + 1);
            self.value
        }
    }

    fn home() -> HandHomePoses {
        HandHomePoses::from_model(&humanoid()).unwrap()
    }

    fn fixed_path(pose: FramePose) -> ManipulationPath {
        ManipulationPath::fixed_pose(ManipulationType::RightHand, pose)
    }

    #[test]
    fn step_in_place_start_equals_land_block() {
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, -0.2, 0.9), yaw_quat(0.0)));
        // Swing right in place: stance = left.
        let f = extract_features(&l, &r, &l, &r, Side::Right, &path, 0.0, &pelvis, &home).unwrap();
        assert_eq!(f.0[0], 0.0, "stance leg left encodes 0");
        assert_eq!(&f.0[8..14], &f.0[14..20], "swing start equals landing");
    }

    #[test]
    fn features_invariant_to_world_transform() {
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let r2 = FramePose::from_xy_yaw(0.25, -0.12, 0.2);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let hand_pose = FramePose::new(Vector3::new(0.4, -0.2, 0.9), yaw_quat(0.3));
        let path = fixed_path(hand_pose);
        let f1 =
            extract_features(&l, &r, &l, &r2, Side::Right, &path, 0.5, &pelvis, &home).unwrap();

        // Apply a common rigid transform to every world input.
        let t = nalgebra::Isometry3::from_parts(
            nalgebra::Translation3::new(1.7, -4.0, 0.0),
            yaw_quat(1.1),
        );
        let path_t = fixed_path(hand_pose.transformed(&t));
        let f2 = extract_features(
            &l.transformed(&t),
            &r.transformed(&t),
            &l.transformed(&t),
            &r2.transformed(&t),
            Side::Right,
            &path_t,
            0.5,
            &pelvis.transformed(&t),
            &home,
        )
        .unwrap();
        for i in 0..FEATURE_DIM {
            assert!((f1.0[i] - f2.0[i]).abs() < 1e-9, "feature {i}: {} vs {}", f1.0[i], f2.0[i]);
        }
    }

    #[test]
    fn swapping_stance_leg_flips_encoding() {
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, 0.0, 0.9), yaw_quat(0.0)));
        let fl = extract_features(&l, &r, &l, &r, Side::Left, &path, 0.0, &pelvis, &home).unwrap();
        let fr = extract_features(&l, &r, &l, &r, Side::Right, &path, 0.0, &pelvis, &home).unwrap();
        assert_eq!(fl.0[0], 1.0, "stance right encodes 1");
        assert_eq!(fr.0[0], 0.0, "stance left encodes 0");
    }

    #[test]
    fn moving_stance_foot_is_rejected() {
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let l2 = FramePose::from_xy_yaw(0.1, 0.1, 0.0);
        let r2 = FramePose::from_xy_yaw(0.2, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, 0.0, 0.9), yaw_quat(0.0)));
        // Declared swing = right, but the left (stance) foot also moved.
        let res = extract_features(&l, &r, &l2, &r2, Side::Right, &path, 0.0, &pelvis, &home);
        assert!(matches!(res, Err(FeasibilityError::IllDefinedStance(Side::Left))));
    }

    #[test]
    fn non_manipulating_hand_uses_home_pose() {
        let model = humanoid();
        let home = HandHomePoses::from_model(&model).unwrap();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, -0.2, 0.9), yaw_quat(0.0)));
        let f = extract_features(&l, &r, &l, &r, Side::Right, &path, 0.0, &pelvis, &home).unwrap();
        let expect = home.world(Side::Left, &pelvis);
        let block = pose_6d(&expect, &l);
        assert_eq!(&f.0[20..26], &block);
    }

    #[test]
    fn query_counts_match_feasibility_cases() {
        let count = Cell::new(0);
        let scorer = CountingScorer { count: &count, value: 0.7 };
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, -0.2, 0.9), yaw_quat(0.0)));
        let mut query = ScoreQuery {
            v1_left: l,
            v1_right: r,
            v2_left: l,
            v2_right: FramePose::from_xy_yaw(0.2, -0.1, 0.0),
            swing: Side::Right,
            has_step: true,
            manipulation: &path,
            s: 0.2,
            delta_s: 0.0,
            n_m: 5,
            pelvis,
            home: &home,
        };
        // delta_s = 0: exactly one query.
        let score = feasibility_score(&scorer, &query).unwrap();
        assert_eq!(count.get(), 1);
        assert_eq!(score, 0.7);
        // delta_s != 0: exactly n_m queries, result is their minimum.
        count.set(0);
        query.delta_s = 0.3;
        let score = feasibility_score(&scorer, &query).unwrap();
        assert_eq!(count.get(), 5);
        assert_eq!(score, 0.7);
    }

    #[test]
    fn constant_scorer_gives_constant_score() {
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        let path = fixed_path(FramePose::new(Vector3::new(0.4, -0.2, 0.9), yaw_quat(0.0)));
        let query = ScoreQuery {
            v1_left: l,
            v1_right: r,
            v2_left: l,
            v2_right: r,
            swing: STEP_IN_PLACE_QUERY_SWING,
            has_step: false,
            manipulation: &path,
            s: 0.0,
            delta_s: 0.4,
            n_m: 7,
            pelvis,
            home: &home,
        };
        let score = feasibility_score(&ConstantScorer(0.5), &query).unwrap();
        assert_eq!(score, 0.5);
    }

    #[test]
    fn min_over_nested_grid_is_monotone() {
        // Doubling n_m yields a superset of query points, so the minimum can
        // only drop or stay.
        struct WavyScorer;
        impl FeasibilityScorer for WavyScorer {
            fn score(&self, f: &FeatureVector) -> f64 {
                0.5 + 0.4 * (13.0 * f.0[26]).sin()
            }
        }
        let home = home();
        let l = FramePose::from_xy_yaw(0.0, 0.1, 0.0);
        let r = FramePose::from_xy_yaw(0.0, -0.1, 0.0);
        let pelvis = stance_pelvis_pose(&l, &r, 0.97);
        // A path whose hand pose varies with s so scores differ per point.
        let a = FramePose::new(Vector3::new(0.3, -0.2, 0.9), yaw_quat(0.0));
        let b = FramePose::new(Vector3::new(0.9, 0.2, 1.1), yaw_quat(0.0));
        let path = ManipulationPath::from_waypoints(
            ManipulationType::RightHand,
            manipulation::Waypoints::new(vec![(0.0, a), (1.0, b)]).unwrap(),
            None,
        )
        .unwrap();
        let mut query = ScoreQuery {
            v1_left: l,
            v1_right: r,
            v2_left: l,
            v2_right: r,
            swing: STEP_IN_PLACE_QUERY_SWING,
            has_step: false,
            manipulation: &path,
            s: 0.1,
            delta_s: 0.6,
            n_m: 5,
            pelvis,
            home: &home,
        };
        let coarse = feasibility_score(&WavyScorer, &query).unwrap();
        query.n_m = 10;
        let fine = feasibility_score(&WavyScorer, &query).unwrap();
        assert!(fine <= coarse + 1e-15, "fine {fine} > coarse {coarse}");
    }
}
