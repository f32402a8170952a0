//! Scenario configuration files: one TOML document wires the model, scenario
//! geometry, gait, IK, planner weights, lattice, sampling, and training
//! settings together for reproducible runs.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{SampleBounds, TrainSettings};
use crate::geometry::FramePose;
use crate::ik::IkSettings;
use crate::locomotion::GaitParams;
use crate::manipulation::ManipulationPath;
use crate::model::RobotModel;
use crate::planner::{LatticeConfig, PlannerWeights};
use crate::scenario::{
    cart_manipulation, door_manipulation, CartGeometry, DoorGeometry, Scenario,
};
use crate::Side;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Manipulation(#[from] crate::manipulation::ManipulationError),
}

fn field_err(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), msg: msg.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorMode {
    Classifier,
    IkOracle,
}

impl std::fmt::Display for EvaluatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvaluatorMode::Classifier => write!(f, "classifier"),
            EvaluatorMode::IkOracle => write!(f, "ik-oracle"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Door,
    Cart,
    WaypointFile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub kind: String,
    // door fields
    pub hinge_position: [f64; 3],
    pub hinge_yaw: f64,
    pub radius: f64,
    pub angle_range: f64,
    pub hand: String,
    // cart fields
    pub left_hand_start: [f64; 3],
    pub right_hand_start: [f64; 3],
    pub direction: [f64; 3],
    pub length: f64,
    // waypoint-file field
    pub path_file: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let door = DoorGeometry::default();
        let cart = CartGeometry::default();
        Self {
            kind: "door".into(),
            hinge_position: door.hinge_position.into(),
            hinge_yaw: door.hinge_yaw,
            radius: door.radius,
            angle_range: door.angle_range,
            hand: "right".into(),
            left_hand_start: cart.left_hand_start.into(),
            right_hand_start: cart.right_hand_start.into(),
            direction: cart.direction.into(),
            length: cart.length,
            path_file: String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StartSection {
    /// Left sole start pose: x, y, yaw.
    pub left: [f64; 3],
    pub right: [f64; 3],
}

impl Default for StartSection {
    fn default() -> Self {
        Self { left: [0.0, 0.1, 0.0], right: [0.0, -0.1, 0.0] }
    }
}

/// Optional region-slice specification for the region command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionSection {
    /// "hand" or "foot".
    pub kind: String,
    pub hand: String,
    pub swing: String,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
    pub orientation_yaw: f64,
    /// Fixed hand target for foot grids.
    pub hand_target: [f64; 3],
    pub landing_yaw: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self {
            kind: "hand".into(),
            hand: "right".into(),
            swing: "left".into(),
            x: [0.15, 0.6],
            y: [-0.5, 0.1],
            nx: 20,
            ny: 20,
            z: 0.95,
            orientation_yaw: 0.0,
            hand_target: [0.4, -0.15, 0.95],
            landing_yaw: 0.0,
        }
    }
}

/// A full scenario configuration document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Model-description path, or "bundled" for the built-in humanoid.
    pub model: String,
    pub seed: u64,
    pub out_dir: String,
    pub evaluator: EvaluatorMode,
    /// Classifier weight file (required in classifier mode).
    pub classifier_model: String,
    /// Discretization count N_m for moving-manipulator feasibility scores.
    pub n_m: usize,
    pub scenario: ScenarioSection,
    pub start: StartSection,
    pub gait: GaitSection,
    pub ik: IkSettings,
    pub weights: PlannerWeights,
    pub lattice: LatticeConfig,
    pub sampling: SampleBounds,
    pub train: TrainSettings,
    pub region: RegionSection,
}

/// Gait parameters with an auto flag: a zero com_height means "derive from
/// the model".
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSection {
    pub t_swing: f64,
    pub t_transfer: f64,
    pub t_settle: f64,
    pub swing_apex_height: f64,
    pub com_height: f64,
    pub gravity: f64,
}

impl Default for GaitSection {
    fn default() -> Self {
        let g = GaitParams::default();
        Self {
            t_swing: g.t_swing,
            t_transfer: g.t_transfer,
            t_settle: g.t_settle,
            swing_apex_height: g.swing_apex_height,
            com_height: 0.0,
            gravity: g.gravity,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: "bundled".into(),
            seed: 42,
            out_dir: "out".into(),
            evaluator: EvaluatorMode::IkOracle,
            classifier_model: String::new(),
            n_m: 5,
            scenario: ScenarioSection::default(),
            start: StartSection::default(),
            gait: GaitSection::default(),
            ik: IkSettings::default(),
            weights: PlannerWeights::default(),
            lattice: LatticeConfig::default(),
            sampling: SampleBounds::default(),
            train: TrainSettings::default(),
            region: RegionSection::default(),
        }
    }
}

fn parse_side(field: &str, value: &str) -> Result<Side, ConfigError> {
    match value {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(field_err(field, format!("expected left|right, got '{other}'"))),
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let config: ScenarioConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(config)
    }

    /// Resolve a possibly config-relative path.
    pub fn resolve(base: &Path, p: &str) -> PathBuf {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            pb
        } else {
            base.join(pb)
        }
    }

    /// Full validation before any work: files exist, modes are consistent,
    /// numeric sections are well-formed.
    pub fn validate(&self, base: &Path) -> Result<(), ConfigError> {
        if self.model != "bundled" {
            let p = Self::resolve(base, &self.model);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p));
            }
        }
        match self.scenario.kind.as_str() {
            "door" => {
                if self.scenario.radius <= 0.0 {
                    return Err(field_err("scenario.radius", "must be positive"));
                }
                parse_side("scenario.hand", &self.scenario.hand)?;
            }
            "cart" => {
                if self.scenario.length < 0.0 {
                    return Err(field_err("scenario.length", "must be non-negative"));
                }
            }
            "waypoint-file" => {
                if self.scenario.path_file.is_empty() {
                    return Err(field_err("scenario.path_file", "required for waypoint-file"));
                }
                let p = Self::resolve(base, &self.scenario.path_file);
                if !p.exists() {
                    return Err(ConfigError::MissingFile(p));
                }
            }
            other => {
                return Err(field_err(
                    "scenario.kind",
                    format!("expected door|cart|waypoint-file, got '{other}'"),
                ))
            }
        }
        if self.evaluator == EvaluatorMode::Classifier {
            if self.classifier_model.is_empty() {
                return Err(field_err(
                    "classifier_model",
                    "required when evaluator = \"classifier\"",
                ));
            }
            let p = Self::resolve(base, &self.classifier_model);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p));
            }
        }
        if self.n_m < 1 {
            return Err(field_err("n_m", "must be at least 1"));
        }
        self.lattice
            .validate()
            .map_err(|e| field_err("lattice", e))?;
        self.weights
            .validate()
            .map_err(|e| field_err("weights", e))?;
        self.ik.validate().map_err(|e| field_err("ik", e.to_string()))?;
        if self.gait.t_swing <= 0.0 || self.gait.t_transfer <= 0.0 || self.gait.t_settle <= 0.0 {
            return Err(field_err("gait", "phase durations must be positive"));
        }
        match self.region.kind.as_str() {
            "hand" | "foot" => {}
            other => {
                return Err(field_err("region.kind", format!("expected hand|foot, got '{other}'")))
            }
        }
        Ok(())
    }

    pub fn load_model(&self, base: &Path) -> Result<RobotModel, ConfigError> {
        if self.model == "bundled" {
            Ok(RobotModel::from_description(crate::REDUCED_HUMANOID)?)
        } else {
            Ok(RobotModel::from_file(&Self::resolve(base, &self.model))?)
        }
    }

    pub fn gait_params(&self, model: &RobotModel) -> Result<GaitParams, ConfigError> {
        let com_height = if self.gait.com_height > 0.0 {
            self.gait.com_height
        } else {
            crate::transition::standing_com_height(model)? - 0.02
        };
        let params = GaitParams {
            t_swing: self.gait.t_swing,
            t_transfer: self.gait.t_transfer,
            t_settle: self.gait.t_settle,
            swing_apex_height: self.gait.swing_apex_height,
            com_height,
            gravity: self.gait.gravity,
            omega: (self.gait.gravity / com_height).sqrt(),
        };
        Ok(params)
    }

    pub fn manipulation(&self, base: &Path) -> Result<ManipulationPath, ConfigError> {
        match self.scenario.kind.as_str() {
            "door" => {
                let geom = DoorGeometry {
                    hinge_position: Vector3::from(self.scenario.hinge_position),
                    hinge_yaw: self.scenario.hinge_yaw,
                    radius: self.scenario.radius,
                    angle_range: self.scenario.angle_range,
                    hand: parse_side("scenario.hand", &self.scenario.hand)?,
                };
                Ok(door_manipulation(&geom)?)
            }
            "cart" => {
                let geom = CartGeometry {
                    left_hand_start: Vector3::from(self.scenario.left_hand_start),
                    right_hand_start: Vector3::from(self.scenario.right_hand_start),
                    direction: Vector3::from(self.scenario.direction),
                    length: self.scenario.length,
                };
                Ok(cart_manipulation(&geom)?)
            }
            "waypoint-file" => {
                let p = Self::resolve(base, &self.scenario.path_file);
                let text = std::fs::read_to_string(&p)?;
                Ok(ManipulationPath::from_file_string(&text)?)
            }
            other => Err(field_err("scenario.kind", format!("unknown kind '{other}'"))),
        }
    }

    pub fn start_poses(&self) -> (FramePose, FramePose) {
        (
            FramePose::from_xy_yaw(self.start.left[0], self.start.left[1], self.start.left[2]),
            FramePose::from_xy_yaw(self.start.right[0], self.start.right[1], self.start.right[2]),
        )
    }

    /// Build the full scenario (model + path + solved start state).
    pub fn build_scenario(&self, base: &Path) -> Result<(RobotModel, Scenario), ConfigError> {
        let model = self.load_model(base)?;
        let gait = self.gait_params(&model)?;
        let manipulation = self.manipulation(base)?;
        let (left, right) = self.start_poses();
        let scenario = Scenario::new(&model, manipulation, left, right, gait, &self.ik)?;
        Ok((model, scenario))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = ScenarioConfig::default();
        let text = toml::to_string(&config).unwrap();
        let parsed: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.seed, config.seed);
        assert_eq!(parsed.evaluator, config.evaluator);
        assert_eq!(parsed.lattice.delta_s_choices, config.lattice.delta_s_choices);
    }

    #[test]
    fn minimal_door_config_parses() {
        let text = r#"
            evaluator = "ik-oracle"
            [scenario]
            kind = "door"
        "#;
        let config: ScenarioConfig = toml::from_str(text).unwrap();
        config.validate(Path::new(".")).unwrap();
        assert_eq!(config.scenario.kind, "door");
    }

    #[test]
    fn classifier_mode_requires_model_path() {
        let text = r#"
            evaluator = "classifier"
            [scenario]
            kind = "cart"
        "#;
        let config: ScenarioConfig = toml::from_str(text).unwrap();
        let err = config.validate(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("classifier_model"), "{err}");
    }

    #[test]
    fn missing_model_file_is_field_error() {
        let config = ScenarioConfig { model: "nope/missing.model".into(), ..Default::default() };
        let err = config.validate(Path::new("/tmp")).unwrap_err();
        assert!(matches!(err, ConfigError::MissingFile(_)));
    }

    #[test]
    fn bad_lattice_is_rejected_before_work() {
        let mut config = ScenarioConfig::default();
        config.lattice.delta_s_choices = vec![0.033];
        let err = config.validate(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("lattice"), "{err}");
    }
}
