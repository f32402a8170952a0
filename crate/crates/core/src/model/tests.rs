use super::*;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const HUMANOID: &str = include_str!("../../assets/reduced_humanoid.model");
pub const PLANAR_2LINK: &str = include_str!("../../assets/planar_2link.model");

fn humanoid() -> RobotModel {
    RobotModel::from_description(HUMANOID).unwrap()
}

fn planar() -> RobotModel {
    RobotModel::from_description(PLANAR_2LINK).unwrap()
}

fn random_configuration(model: &RobotModel, rng: &mut impl Rng) -> Configuration {
    let n = model.num_revolute_joints();
    let mut joints = DVector::zeros(n);
    for (qi, &ji) in model.revolute_joints.iter().enumerate() {
        let (lo, hi) = model.joints[ji].limits;
        let mid = 0.5 * (lo + hi);
        let half = 0.45 * (hi - lo);
        joints[qi] = rng.gen_range(mid - half..mid + half);
    }
    let base = Isometry3::from_parts(
        Translation3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.5..1.2),
        ),
        UnitQuaternion::from_euler_angles(
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-1.0..1.0),
        ),
    );
    Configuration { base_pose: base, joint_positions: joints }
}

/// Central-difference check of a 6 x ndof frame Jacobian.
fn jacobian_matches_fd(model: &RobotModel, q: &Configuration, frame: &str, tol: f64) {
    let jac = model.frame_jacobian(q, frame).unwrap();
    let h = 1e-6;
    for col in 0..model.ndof() {
        let mut dq = DVector::zeros(model.ndof());
        dq[col] = h;
        let qp = perturb_unclamped(model, q, &dq);
        dq[col] = -h;
        let qm = perturb_unclamped(model, q, &dq);
        let fp = model.forward_kinematics(&qp, frame).unwrap();
        let fm = model.forward_kinematics(&qm, frame).unwrap();
        let dlin = (fp.position - fm.position) / (2.0 * h);
        let dang = (fp.orientation * fm.orientation.inverse()).scaled_axis() / (2.0 * h);
        for row in 0..3 {
            assert!(
                (jac[(row, col)] - dlin[row]).abs() < tol,
                "{frame} linear row {row} col {col}: {} vs {}",
                jac[(row, col)],
                dlin[row]
            );
            assert!(
                (jac[(row + 3, col)] - dang[row]).abs() < tol,
                "{frame} angular row {row} col {col}: {} vs {}",
                jac[(row + 3, col)],
                dang[row]
            );
        }
    }
}

/// Tangent step without joint-limit clamping (test-only).
fn perturb_unclamped(model: &RobotModel, q: &Configuration, dq: &DVector<f64>) -> Configuration {
    assert_eq!(dq.len(), model.ndof());
    let dp = Vector3::new(dq[0], dq[1], dq[2]);
    let dw = Vector3::new(dq[3], dq[4], dq[5]);
    let mut joints = q.joint_positions.clone();
    for i in 0..joints.len() {
        joints[i] += dq[6 + i];
    }
    Configuration {
        base_pose: Isometry3::from_parts(
            Translation3::from(q.base_pose.translation.vector + dp),
            UnitQuaternion::from_scaled_axis(dw) * q.base_pose.rotation,
        ),
        joint_positions: joints,
    }
}

#[test]
fn humanoid_has_29_revolute_joints() {
    let model = humanoid();
    assert_eq!(model.num_revolute_joints(), 29);
    assert_eq!(model.ndof(), 35);
    for id in FrameId::ALL {
        assert!(model.frames.contains_key(id.key()), "missing frame {id:?}");
    }
    assert_eq!(model.torso_group.len(), 3);
}

#[test]
fn single_link_model_loads() {
    let text = "link base mass=1.0\nlink arm mass=1.0 com=0.5,0,0\n\
                joint root type=floating parent=world child=base\n\
                joint j type=revolute parent=base child=arm axis=0,0,1 limits=-1,1\n";
    let model = RobotModel::from_description(text).unwrap();
    assert_eq!(model.num_revolute_joints(), 1);
}

#[test]
fn cyclic_model_is_rejected() {
    // b's parent is c, c's parent is b: a two-link cycle off the root.
    let text = "link base mass=1.0\nlink b mass=1.0\nlink c mass=1.0\n\
                joint root type=floating parent=world child=base\n\
                joint j1 type=revolute parent=c child=b axis=0,0,1\n\
                joint j2 type=revolute parent=b child=c axis=0,0,1\n";
    let res = RobotModel::from_description(text);
    assert!(matches!(res, Err(ModelError::Cycle(_))), "{res:?}");
}

#[test]
fn fk_zero_configuration_chains_origins() {
    let model = planar();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(2),
    };
    let tip = model.forward_kinematics(&q, "tip").unwrap();
    assert!((tip.position - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn fk_planar_two_link_oracle() {
    let model = planar();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]),
    };
    let tip = model.forward_kinematics(&q, "tip").unwrap();
    assert!((tip.position - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12, "{}", tip.position);
}

#[test]
fn fk_base_translation_equivariance() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = random_configuration(&model, &mut rng);
    let shift = Vector3::new(1.0, 0.0, 0.0);
    let mut q2 = q.clone();
    q2.base_pose = Isometry3::from_parts(
        Translation3::from(q.base_pose.translation.vector + shift),
        q.base_pose.rotation,
    );
    for id in FrameId::ALL {
        let a = model.frame_pose(&q, id).unwrap();
        let b = model.frame_pose(&q2, id).unwrap();
        assert!((b.position - a.position - shift).norm() < 1e-12);
        assert!(a.orientation.angle_to(&b.orientation) < 1e-12);
    }
}

#[test]
fn fk_rigid_transform_equivariance() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = Isometry3::from_parts(
        Translation3::new(0.3, -1.1, 0.2),
        UnitQuaternion::from_euler_angles(0.2, -0.1, 1.3),
    );
    for _ in 0..10 {
        let q = random_configuration(&model, &mut rng);
        let mut qt = q.clone();
        qt.base_pose = t * q.base_pose;
        for id in FrameId::ALL {
            let a = model.frame_pose(&q, id).unwrap().transformed(&t);
            let b = model.frame_pose(&qt, id).unwrap();
            assert!((a.position - b.position).norm() < 1e-9);
            assert!(a.orientation.angle_to(&b.orientation) < 1e-9);
        }
    }
}

#[test]
fn frame_jacobian_matches_finite_differences() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let q = random_configuration(&model, &mut rng);
        for id in FrameId::ALL {
            jacobian_matches_fd(&model, &q, id.key(), 1e-6);
        }
    }
}

#[test]
fn jacobian_off_chain_column_is_zero() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_configuration(&model, &mut rng);
    let jac = model.frame_jacobian(&q, "left_hand").unwrap();
    // Leg joints do not move the hand relative to the base: their columns
    // must be exactly zero.
    let leg_q_indices: Vec<usize> = model
        .joints
        .iter()
        .filter(|j| j.name.contains("hip") || j.name.contains("knee") || j.name.contains("ankle"))
        .filter_map(|j| j.q_index)
        .collect();
    assert!(!leg_q_indices.is_empty());
    for qi in leg_q_indices {
        for row in 0..6 {
            assert_eq!(jac[(row, 6 + qi)], 0.0);
        }
    }
}

#[test]
fn jacobian_base_linear_block_is_identity() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = random_configuration(&model, &mut rng);
    let jac = model.frame_jacobian(&q, "right_hand").unwrap();
    for row in 0..3 {
        for col in 0..3 {
            let expect = if row == col { 1.0 } else { 0.0 };
            assert_eq!(jac[(row, col)], expect);
        }
    }
}

#[test]
fn com_single_link() {
    let text = "link only mass=2.5 com=0.1,0.2,0.3\njoint root type=floating parent=world child=only\n";
    let model = RobotModel::from_description(text).unwrap();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(0),
    };
    let com = model.com_position(&q).unwrap();
    assert!((com - Vector3::new(0.1, 0.2, 0.3)).norm() < 1e-12);
}

#[test]
fn com_two_equal_masses() {
    let text = "link a mass=1.0 com=0,0,0\nlink b mass=1.0 com=0,0,0\n\
                joint root type=floating parent=world child=a\n\
                joint j type=revolute parent=a child=b axis=0,0,1 origin=1,0,0,0,0,0\n";
    let model = RobotModel::from_description(text).unwrap();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(1),
    };
    let com = model.com_position(&q).unwrap();
    assert!((com - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn com_jacobian_matches_finite_differences() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let q = random_configuration(&model, &mut rng);
        let jac = model.com_jacobian(&q).unwrap();
        let h = 1e-6;
        for col in 0..model.ndof() {
            let mut dq = DVector::zeros(model.ndof());
            dq[col] = h;
            let cp = model.com_position(&perturb_unclamped(&model, &q, &dq)).unwrap();
            dq[col] = -h;
            let cm = model.com_position(&perturb_unclamped(&model, &q, &dq)).unwrap();
            let fd = (cp - cm) / (2.0 * h);
            for row in 0..3 {
                assert!(
                    (jac[(row, col)] - fd[row]).abs() < 1e-6,
                    "com row {row} col {col}"
                );
            }
        }
    }
}

#[test]
fn inertia_symmetry() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let q = random_configuration(&model, &mut rng);
        let a = model.joint_space_inertia(&q).unwrap();
        let asym = (&a - a.transpose()).abs().max();
        assert!(asym < 1e-10, "asymmetry {asym}");
    }
}

#[test]
fn inertia_point_mass_pendulum() {
    let text = "link base mass=1.0\nlink bob mass=2.0 com=0,0,-0.7\n\
                joint root type=floating parent=world child=base\n\
                joint j type=revolute parent=base child=bob axis=0,1,0\n";
    let model = RobotModel::from_description(text).unwrap();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(1),
    };
    let a = model.joint_space_inertia(&q).unwrap();
    // m * l^2 with m = 2.0, l = 0.7.
    assert!((a[(6, 6)] - 2.0 * 0.49).abs() < 1e-12);
}

#[test]
fn identity_weighting_is_exact_identity() {
    let model = humanoid();
    let q = model.nominal_configuration();
    let a = model.ik_weighting(&q, InertiaWeighting::Identity).unwrap();
    assert_eq!(a, DMatrix::identity(model.ndof(), model.ndof()));
}

#[test]
fn regularized_inertia_is_positive_definite() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let q = random_configuration(&model, &mut rng);
        let a = model.ik_weighting(&q, InertiaWeighting::default()).unwrap();
        let eig = a.symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "min eigenvalue {}", eig.min());
    }
}

#[test]
fn clamp_inside_limits_is_identity() {
    let model = humanoid();
    let q = model.nominal_configuration();
    let c = model.clamp_configuration(&q).unwrap();
    assert_eq!(c.joint_positions, q.joint_positions);
}

#[test]
fn clamp_projects_to_limits() {
    let model = humanoid();
    let mut q = model.nominal_configuration();
    let n = model.num_revolute_joints();
    // Everything far above its upper limit.
    for i in 0..n {
        q.joint_positions[i] = 100.0;
    }
    let c = model.clamp_configuration(&q).unwrap();
    for (qi, &ji) in model.revolute_joints.iter().enumerate() {
        assert_eq!(c.joint_positions[qi], model.joints[ji].limits.1);
    }
    // Everything far below its lower limit.
    for i in 0..n {
        q.joint_positions[i] = -100.0;
    }
    let c = model.clamp_configuration(&q).unwrap();
    for (qi, &ji) in model.revolute_joints.iter().enumerate() {
        assert_eq!(c.joint_positions[qi], model.joints[ji].limits.0);
    }
}

#[test]
fn clamp_single_joint_over_limit() {
    let model = humanoid();
    let mut q = model.nominal_configuration();
    let (_, hi) = model.joints[model.revolute_joints[4]].limits;
    q.joint_positions[4] = hi + 0.5;
    let c = model.clamp_configuration(&q).unwrap();
    assert_eq!(c.joint_positions[4], hi);
}

#[test]
fn clamp_is_idempotent() {
    let model = humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let mut q = random_configuration(&model, &mut rng);
        for i in 0..q.joint_positions.len() {
            q.joint_positions[i] += rng.gen_range(-2.0..2.0);
        }
        let once = model.clamp_configuration(&q).unwrap();
        let twice = model.clamp_configuration(&once).unwrap();
        assert_eq!(once.joint_positions, twice.joint_positions);
        assert_eq!(once.base_pose, twice.base_pose);
    }
}

#[test]
fn unknown_frame_errors() {
    let model = planar();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(2),
    };
    assert!(matches!(
        model.forward_kinematics(&q, "nope"),
        Err(ModelError::UnknownFrame(_))
    ));
}

#[test]
fn dimension_mismatch_errors() {
    let model = planar();
    let q = Configuration {
        base_pose: Isometry3::identity(),
        joint_positions: DVector::zeros(5),
    };
    assert!(matches!(
        model.forward_kinematics(&q, "tip"),
        Err(ModelError::DimensionMismatch { .. })
    ));
}
