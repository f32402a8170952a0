//! Parser for the line-oriented model description format.

use super::{Joint, JointKind, Link, ModelError, NamedFrame, RobotModel};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use std::collections::HashMap;

/// Reference notes for the on-disk schema (also documented in the README).
///
/// ```text
/// link  <name> mass=<kg> com=<x,y,z>
/// joint <name> type=floating parent=world child=<link>
/// joint <name> type=revolute parent=<link> child=<link> axis=<x,y,z>
///       origin=<x,y,z,roll,pitch,yaw> limits=<lo,hi>
/// frame <alias> link=<link> offset=<x,y,z,roll,pitch,yaw>
/// group torso joints=<j1,j2,...>
/// nominal <joint>=<rad> [<joint>=<rad> ...]
/// ```
///
/// Lines starting with `#` are comments. Revolute joints are numbered in file
/// order; that order defines the configuration vector.
pub const SCHEMA_NOTES: &str = "see module documentation";

fn err(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse { line, msg: msg.into() }
}

fn parse_floats(line: usize, s: &str, n: usize) -> Result<Vec<f64>, ModelError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| err(line, format!("bad number list '{s}': {e}")))?;
    if vals.len() != n {
        return Err(err(line, format!("expected {n} numbers, got {}", vals.len())));
    }
    Ok(vals)
}

fn parse_xyz_rpy(line: usize, s: &str) -> Result<Isometry3<f64>, ModelError> {
    let v = parse_floats(line, s, 6)?;
    Ok(Isometry3::from_parts(
        Translation3::new(v[0], v[1], v[2]),
        UnitQuaternion::from_euler_angles(v[3], v[4], v[5]),
    ))
}

struct RawJoint {
    name: String,
    kind: JointKind,
    parent: String,
    child: String,
    axis: UnitVector3<f64>,
    origin: Isometry3<f64>,
    limits: (f64, f64),
}

fn fields<'a>(line: usize, tokens: &'a [&'a str]) -> Result<HashMap<&'a str, &'a str>, ModelError> {
    let mut map = HashMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key=value, got '{tok}'")))?;
        map.insert(k, v);
    }
    Ok(map)
}

pub fn parse_model(text: &str) -> Result<RobotModel, ModelError> {
    let mut raw_links: Vec<(usize, String, f64, Vector3<f64>)> = Vec::new();
    let mut raw_joints: Vec<(usize, RawJoint)> = Vec::new();
    let mut raw_frames: Vec<(usize, String, String, Isometry3<f64>)> = Vec::new();
    let mut torso_group_names: Vec<String> = Vec::new();
    let mut nominal: HashMap<String, f64> = HashMap::new();

    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "link" => {
                if tokens.len() < 2 {
                    return Err(err(lineno, "link needs a name"));
                }
                let f = fields(lineno, &tokens[2..])?;
                let mass: f64 = f
                    .get("mass")
                    .ok_or_else(|| err(lineno, "link missing mass"))?
                    .parse()
                    .map_err(|e| err(lineno, format!("bad mass: {e}")))?;
                let com = f
                    .get("com")
                    .map(|s| parse_floats(lineno, s, 3))
                    .transpose()?
                    .map(|v| Vector3::new(v[0], v[1], v[2]))
                    .unwrap_or_else(Vector3::zeros);
                raw_links.push((lineno, tokens[1].to_string(), mass, com));
            }
            "joint" => {
                if tokens.len() < 2 {
                    return Err(err(lineno, "joint needs a name"));
                }
                let f = fields(lineno, &tokens[2..])?;
                let kind = match f.get("type").copied() {
                    Some("revolute") => JointKind::Revolute,
                    Some("floating") => JointKind::FloatingBase,
                    other => {
                        return Err(err(lineno, format!("bad joint type {other:?}")));
                    }
                };
                let parent = f
                    .get("parent")
                    .ok_or_else(|| err(lineno, "joint missing parent"))?
                    .to_string();
                let child = f
                    .get("child")
                    .ok_or_else(|| err(lineno, "joint missing child"))?
                    .to_string();
                let axis = match f.get("axis") {
                    Some(s) => {
                        let v = parse_floats(lineno, s, 3)?;
                        UnitVector3::try_new(Vector3::new(v[0], v[1], v[2]), 1e-9)
                            .ok_or_else(|| err(lineno, "axis must be a non-zero vector"))?
                    }
                    None => Vector3::z_axis(),
                };
                let origin = match f.get("origin") {
                    Some(s) => parse_xyz_rpy(lineno, s)?,
                    None => Isometry3::identity(),
                };
                let limits = match f.get("limits") {
                    Some(s) => {
                        let v = parse_floats(lineno, s, 2)?;
                        (v[0], v[1])
                    }
                    None => (-std::f64::consts::PI, std::f64::consts::PI),
                };
                if kind == JointKind::Revolute && limits.0 > limits.1 {
                    return Err(err(lineno, "empty joint limit interval"));
                }
                raw_joints.push((
                    lineno,
                    RawJoint { name: tokens[1].to_string(), kind, parent, child, axis, origin, limits },
                ));
            }
            "frame" => {
                if tokens.len() < 2 {
                    return Err(err(lineno, "frame needs a name"));
                }
                let f = fields(lineno, &tokens[2..])?;
                let link = f
                    .get("link")
                    .ok_or_else(|| err(lineno, "frame missing link"))?
                    .to_string();
                let local = match f.get("offset") {
                    Some(s) => parse_xyz_rpy(lineno, s)?,
                    None => Isometry3::identity(),
                };
                raw_frames.push((lineno, tokens[1].to_string(), link, local));
            }
            "group" => {
                if tokens.len() < 2 || tokens[1] != "torso" {
                    return Err(err(lineno, "only 'group torso' is supported"));
                }
                let f = fields(lineno, &tokens[2..])?;
                let joints = f.get("joints").ok_or_else(|| err(lineno, "group missing joints"))?;
                torso_group_names = joints.split(',').map(|s| s.trim().to_string()).collect();
            }
            "nominal" => {
                for tok in &tokens[1..] {
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| err(lineno, "nominal entries are joint=value"))?;
                    let val: f64 =
                        v.parse().map_err(|e| err(lineno, format!("bad nominal value: {e}")))?;
                    nominal.insert(k.to_string(), val);
                }
            }
            other => return Err(err(lineno, format!("unknown directive '{other}'"))),
        }
    }

    if raw_links.is_empty() {
        return Err(ModelError::Invalid("model has no links".into()));
    }

    // Link name table.
    let mut name_to_raw: HashMap<String, usize> = HashMap::new();
    for (idx, (lineno, name, mass, _)) in raw_links.iter().enumerate() {
        if *mass <= 0.0 {
            return Err(err(*lineno, format!("link '{name}' must have positive mass")));
        }
        if name_to_raw.insert(name.clone(), idx).is_some() {
            return Err(err(*lineno, format!("duplicate link '{name}'")));
        }
    }

    // Identify the root: child of the unique floating joint, or the single
    // link that is no joint's child.
    let floating: Vec<&(usize, RawJoint)> = raw_joints
        .iter()
        .filter(|(_, j)| j.kind == JointKind::FloatingBase)
        .collect();
    if floating.len() > 1 {
        return Err(ModelError::Invalid("more than one floating-base joint".into()));
    }
    if let Some((lineno, j)) = floating.first() {
        if j.parent != "world" {
            return Err(err(*lineno, "floating joint parent must be 'world'"));
        }
    }
    let root_name: String = match floating.first() {
        Some((_, j)) => j.child.clone(),
        None => {
            let children: std::collections::HashSet<&str> = raw_joints
                .iter()
                .map(|(_, j)| j.child.as_str())
                .collect();
            let roots: Vec<&String> = raw_links
                .iter()
                .map(|(_, n, _, _)| n)
                .filter(|n| !children.contains(n.as_str()))
                .collect();
            if roots.len() != 1 {
                return Err(ModelError::Invalid(format!(
                    "expected exactly one root link, found {}",
                    roots.len()
                )));
            }
            roots[0].clone()
        }
    };
    if !name_to_raw.contains_key(&root_name) {
        return Err(ModelError::MissingFrame(root_name));
    }

    // Parent map from revolute joints; verify each link is the child of at
    // most one joint and all referenced links exist.
    let mut child_to_joint: HashMap<String, usize> = HashMap::new();
    for (ji, (lineno, j)) in raw_joints.iter().enumerate() {
        if j.kind == JointKind::FloatingBase {
            continue;
        }
        if !name_to_raw.contains_key(&j.parent) {
            return Err(err(*lineno, format!("joint '{}' parent link '{}' not found", j.name, j.parent)));
        }
        if !name_to_raw.contains_key(&j.child) {
            return Err(err(*lineno, format!("joint '{}' child link '{}' not found", j.name, j.child)));
        }
        if j.child == root_name {
            return Err(err(*lineno, "root link cannot be a revolute joint's child"));
        }
        if child_to_joint.insert(j.child.clone(), ji).is_some() {
            return Err(err(*lineno, format!("link '{}' has multiple parent joints", j.child)));
        }
    }

    // Every non-root link must be reachable from the root without cycles;
    // walk each link's ancestor chain.
    for (_, name, _, _) in &raw_links {
        if *name == root_name {
            continue;
        }
        let mut seen = std::collections::HashSet::new();
        let mut cur = name.clone();
        loop {
            if !seen.insert(cur.clone()) {
                return Err(ModelError::Cycle(name.clone()));
            }
            match child_to_joint.get(&cur) {
                Some(&ji) => {
                    cur = raw_joints[ji].1.parent.clone();
                    if cur == root_name {
                        break;
                    }
                }
                None => {
                    return Err(ModelError::Invalid(format!(
                        "link '{name}' is not connected to the root"
                    )));
                }
            }
        }
    }

    // Topological link order: root first, then repeatedly append links whose
    // parent link is already placed, preserving file order within rounds.
    let mut order: Vec<usize> = vec![name_to_raw[&root_name]];
    let mut placed: std::collections::HashSet<usize> = order.iter().copied().collect();
    while order.len() < raw_links.len() {
        let before = order.len();
        for (idx, (_, name, _, _)) in raw_links.iter().enumerate() {
            if placed.contains(&idx) {
                continue;
            }
            let ji = child_to_joint[name];
            let parent_idx = name_to_raw[&raw_joints[ji].1.parent];
            if placed.contains(&parent_idx) {
                order.push(idx);
                placed.insert(idx);
            }
        }
        if order.len() == before {
            return Err(ModelError::Cycle("unreachable links form a cycle".into()));
        }
    }

    let raw_to_final: HashMap<usize, usize> =
        order.iter().enumerate().map(|(fin, raw)| (*raw, fin)).collect();

    let mut links: Vec<Link> = Vec::with_capacity(raw_links.len());
    let mut link_index = HashMap::new();
    for &raw_idx in &order {
        let (_, name, mass, com) = &raw_links[raw_idx];
        link_index.insert(name.clone(), links.len());
        links.push(Link {
            name: name.clone(),
            mass: *mass,
            com_offset: *com,
            parent_joint: None,
        });
    }

    // Joints in file order; revolute joints get q-indices in file order.
    let mut joints: Vec<Joint> = Vec::new();
    let mut revolute_joints: Vec<usize> = Vec::new();
    let mut joint_name_to_q: HashMap<String, usize> = HashMap::new();
    for (_, rj) in &raw_joints {
        let child_final = raw_to_final[&name_to_raw[&rj.child]];
        let parent_final = if rj.kind == JointKind::FloatingBase {
            child_final
        } else {
            raw_to_final[&name_to_raw[&rj.parent]]
        };
        let q_index = if rj.kind == JointKind::Revolute {
            let qi = revolute_joints.len();
            revolute_joints.push(joints.len());
            joint_name_to_q.insert(rj.name.clone(), qi);
            Some(qi)
        } else {
            None
        };
        if rj.kind == JointKind::Revolute {
            links[child_final].parent_joint = Some(joints.len());
        }
        joints.push(Joint {
            name: rj.name.clone(),
            kind: rj.kind,
            axis: rj.axis,
            origin: rj.origin,
            limits: rj.limits,
            parent_link: parent_final,
            child_link: child_final,
            q_index,
        });
    }

    let mut frames = HashMap::new();
    for (lineno, alias, link_name, local) in raw_frames {
        let link = *link_index
            .get(&link_name)
            .ok_or_else(|| err(lineno, format!("frame '{alias}' references unknown link '{link_name}'")))?;
        frames.insert(alias, NamedFrame { link, local });
    }

    let mut torso_group = Vec::new();
    for name in &torso_group_names {
        let qi = joint_name_to_q
            .get(name)
            .ok_or_else(|| ModelError::Invalid(format!("torso group joint '{name}' not found")))?;
        torso_group.push(*qi);
    }

    let mut nominal_posture = vec![0.0; revolute_joints.len()];
    for (name, val) in &nominal {
        let qi = joint_name_to_q
            .get(name)
            .ok_or_else(|| ModelError::Invalid(format!("nominal joint '{name}' not found")))?;
        nominal_posture[*qi] = *val;
    }

    Ok(RobotModel {
        links,
        joints,
        revolute_joints,
        frames,
        torso_group,
        nominal_posture,
        link_index,
    })
}
