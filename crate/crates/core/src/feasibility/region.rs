//! Region-grid export: per-cell feasibility over a slice of hand poses (for
//! a fixed contact transition) or foot landing poses (for a fixed hand pose),
//! written as columnar text for external rendering.

use nalgebra::{UnitQuaternion, Vector3};

use super::data::settled_standing;
use super::{FeasibilityError, FeasibilityScorer, HandHomePoses, TransitionQuery};
use crate::geometry::FramePose;
use crate::ik::IkSettings;
use crate::locomotion::{Footstep, GaitParams};
use crate::manipulation::{ManipulationPath, ManipulationType};
use crate::model::RobotModel;
use crate::transition::Transition;
use crate::Side;

/// One evaluated grid cell.
#[derive(Clone, Copy, Debug)]
pub struct GridCell {
    pub a: f64,
    pub b: f64,
    /// Classifier score, or 0/1 for IK-oracle labels.
    pub score: f64,
    pub label: bool,
}

#[derive(Clone, Debug)]
pub struct RegionGrid {
    pub axis_a: String,
    pub axis_b: String,
    pub cells: Vec<GridCell>,
}

impl RegionGrid {
    pub fn to_file_string(&self) -> String {
        let mut out = format!("# {} {} score label\n", self.axis_a, self.axis_b);
        for c in &self.cells {
            out.push_str(&format!(
                "{:.6} {:.6} {:.6} {}\n",
                c.a,
                c.b,
                c.score,
                if c.label { 1 } else { 0 }
            ));
        }
        out
    }

    pub fn feasible_count(&self) -> usize {
        self.cells.iter().filter(|c| c.label).count()
    }
}

/// Hand-pose slice: a grid over x/y at fixed z (all in world coordinates)
/// with a fixed hand orientation.
#[derive(Clone, Copy, Debug)]
pub struct HandGridSpec {
    pub hand: Side,
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
    pub orientation: UnitQuaternion<f64>,
}

/// How a hand-pose grid cell is judged.
pub enum HandGridEvaluator<'a> {
    /// IK on a stand-still manifold: pure manipulation reachability.
    ManipulationIk,
    /// IK on a step transition (swing leg steps in place): the
    /// locomanipulability region.
    LocomanipulationIk { swing: Side },
    /// Classifier score on a step-in-place transition.
    Classifier { scorer: &'a dyn FeasibilityScorer, swing: Side },
}

/// Evaluate a hand-pose region grid over a fixed double-support stance.
pub fn hand_region_grid(
    model: &RobotModel,
    left: &FramePose,
    right: &FramePose,
    spec: &HandGridSpec,
    evaluator: &HandGridEvaluator<'_>,
    gait: &GaitParams,
    ik: &IkSettings,
) -> Result<RegionGrid, FeasibilityError> {
    if spec.nx == 0 || spec.ny == 0 {
        return Err(FeasibilityError::EmptyGrid);
    }
    let q0 = settled_standing(model, left, right, gait, ik)
        .ok_or_else(|| FeasibilityError::Training("stance IK failed for the grid base".into()))?;
    let home = HandHomePoses::from_model(model)?;
    let pelvis = model.frame_pose(&q0, crate::model::FrameId::Pelvis)?;
    let manipulation_type = match spec.hand {
        Side::Left => ManipulationType::LeftHand,
        Side::Right => ManipulationType::RightHand,
    };

    let mut cells = Vec::with_capacity(spec.nx * spec.ny);
    for ix in 0..spec.nx {
        for iy in 0..spec.ny {
            let fx = if spec.nx == 1 { 0.0 } else { ix as f64 / (spec.nx - 1) as f64 };
            let fy = if spec.ny == 1 { 0.0 } else { iy as f64 / (spec.ny - 1) as f64 };
            let x = spec.x.0 + fx * (spec.x.1 - spec.x.0);
            let y = spec.y.0 + fy * (spec.y.1 - spec.y.0);
            let hand_pose = FramePose::new(Vector3::new(x, y, spec.z), spec.orientation);
            let path = ManipulationPath::fixed_pose(manipulation_type, hand_pose);
            let (score, label) = match evaluator {
                HandGridEvaluator::ManipulationIk => {
                    let t = Transition {
                        left: *left,
                        right: *right,
                        step: None,
                        s_start: 0.0,
                        delta_s: 0.0,
                    };
                    let ok = t
                        .solve(model, &q0, Some(&path), gait, ik)
                        .map(|r| r.converged)
                        .unwrap_or(false);
                    (if ok { 1.0 } else { 0.0 }, ok)
                }
                HandGridEvaluator::LocomanipulationIk { swing } => {
                    let pose = match swing {
                        Side::Left => *left,
                        Side::Right => *right,
                    };
                    let t = Transition {
                        left: *left,
                        right: *right,
                        step: Some(Footstep { side: *swing, pose }),
                        s_start: 0.0,
                        delta_s: 0.0,
                    };
                    let ok = t
                        .solve(model, &q0, Some(&path), gait, ik)
                        .map(|r| r.converged)
                        .unwrap_or(false);
                    (if ok { 1.0 } else { 0.0 }, ok)
                }
                HandGridEvaluator::Classifier { scorer, swing } => {
                    let stance = match swing.opposite() {
                        Side::Left => left,
                        Side::Right => right,
                    };
                    let moving = match swing {
                        Side::Left => left,
                        Side::Right => right,
                    };
                    let query = TransitionQuery {
                        swing: *swing,
                        stance_foot: *stance,
                        swing_start: *moving,
                        swing_land: *moving,
                        pelvis,
                        left_hand: if manipulation_type.uses(Side::Left) {
                            hand_pose
                        } else {
                            home.world(Side::Left, &pelvis)
                        },
                        right_hand: if manipulation_type.uses(Side::Right) {
                            hand_pose
                        } else {
                            home.world(Side::Right, &pelvis)
                        },
                        manipulation_type,
                    };
                    let s = scorer.score(&query.features());
                    (s, s > 0.5)
                }
            };
            cells.push(GridCell { a: x, b: y, score, label });
        }
    }
    Ok(RegionGrid { axis_a: "hand_x".into(), axis_b: "hand_y".into(), cells })
}

/// Foot-landing slice: a grid over landing x/y for a fixed swing leg and a
/// fixed hand pose (the contact-transition view of the region).
#[derive(Clone, Copy, Debug)]
pub struct FootGridSpec {
    pub swing: Side,
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub landing_yaw: f64,
}

/// Evaluate a foot-landing region grid with the IK oracle; the hand is held
/// at `hand_pose` throughout.
#[allow(clippy::too_many_arguments)]
pub fn foot_region_grid(
    model: &RobotModel,
    left: &FramePose,
    right: &FramePose,
    hand: Side,
    hand_pose: &FramePose,
    spec: &FootGridSpec,
    gait: &GaitParams,
    ik: &IkSettings,
) -> Result<RegionGrid, FeasibilityError> {
    if spec.nx == 0 || spec.ny == 0 {
        return Err(FeasibilityError::EmptyGrid);
    }
    let q0 = settled_standing(model, left, right, gait, ik)
        .ok_or_else(|| FeasibilityError::Training("stance IK failed for the grid base".into()))?;
    let manipulation_type = match hand {
        Side::Left => ManipulationType::LeftHand,
        Side::Right => ManipulationType::RightHand,
    };
    let path = ManipulationPath::fixed_pose(manipulation_type, *hand_pose);
    let mut cells = Vec::with_capacity(spec.nx * spec.ny);
    for ix in 0..spec.nx {
        for iy in 0..spec.ny {
            let fx = if spec.nx == 1 { 0.0 } else { ix as f64 / (spec.nx - 1) as f64 };
            let fy = if spec.ny == 1 { 0.0 } else { iy as f64 / (spec.ny - 1) as f64 };
            let x = spec.x.0 + fx * (spec.x.1 - spec.x.0);
            let y = spec.y.0 + fy * (spec.y.1 - spec.y.0);
            let t = Transition {
                left: *left,
                right: *right,
                step: Some(Footstep {
                    side: spec.swing,
                    pose: FramePose::from_xy_yaw(x, y, spec.landing_yaw),
                }),
                s_start: 0.0,
                delta_s: 0.0,
            };
            let ok = t
                .solve(model, &q0, Some(&path), gait, ik)
                .map(|r| r.converged)
                .unwrap_or(false);
            cells.push(GridCell { a: x, b: y, score: if ok { 1.0 } else { 0.0 }, label: ok });
        }
    }
    Ok(RegionGrid { axis_a: "land_x".into(), axis_b: "land_y".into(), cells })
}
