//! Scene files (TOML): start pose, object, contact surface, goal and task
//! frames for one reproduction.
//!
//! ```toml
//! [start]
//! position = [0.3, 0.0, 0.15]
//!
//! [object]
//! position = [0.52, 0.02, 0.0]
//! orientation = [1.0, 0.0, 0.0, 0.0]   # w x y z
//!
//! [surface]
//! kind = "object"                      # "none", "object" or "plane"
//!
//! [goal]
//! kind = "model"                       # or "point" with point = [...], frame = "object"
//! ```
//!
//! Task frames default to the robot start pose and the object pose. A
//! `[frames.<name>]` table per frame replaces them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use forceskill_core::demo::Scene;
use forceskill_core::execution::{Environment, Goal, PlantState};
use forceskill_core::manifold::{Frame, Pose, Vector};
use forceskill_core::skill::SkillModel;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IoError, Result};

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub position: [f64; 3],
    /// `w x y z`.
    #[serde(default = "identity_quat")]
    pub orientation: [f64; 4],
}

impl PoseSpec {
    pub fn from_pose(p: &Pose) -> Self {
        let q = p.orientation.quaternion();
        PoseSpec { position: p.position.into(), orientation: [q.w, q.i, q.j, q.k] }
    }

    pub fn to_pose(&self) -> std::result::Result<Pose, String> {
        let [w, x, y, z] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 0.0) || !q.norm().is_finite() || self.position.iter().any(|v| !v.is_finite()) {
            return Err("pose must be finite with a nonzero quaternion".into());
        }
        Ok(Pose::new(Vector3::from(self.position), UnitQuaternion::new_normalize(q)))
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    #[default]
    None,
    /// Plane through the object origin, normal along the object z axis.
    Object,
    Plane { point: [f64; 3], normal: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSpec {
    #[default]
    Model,
    Point { point: Vec<f64>, frame: Option<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSpec {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
}

impl Default for ContactSpec {
    fn default() -> Self {
        let e = Environment::default();
        ContactSpec { stiffness: e.stiffness, damping: e.damping, friction: e.friction }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub start: PoseSpec,
    pub object: PoseSpec,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub contact: ContactSpec,
    #[serde(default)]
    pub goal: GoalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<BTreeMap<String, PoseSpec>>,
}

/// Everything `run_episode` needs besides the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedScene {
    pub scene: Scene,
    pub start: PlantState,
    pub environment: Environment,
    pub goal: Goal,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| IoError::Config { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene serializes")
    }

    pub fn resolve(&self, skill: &SkillModel) -> std::result::Result<ResolvedScene, ResolveError> {
        let start = self.start.to_pose().map_err(ResolveError::Invalid)?;
        let object = self.object.to_pose().map_err(ResolveError::Invalid)?;
        let scene = match &self.frames {
            None => skill.scene(&start, &object)?,
            Some(frames) => {
                let mut list = Vec::new();
                for name in &skill.model.frame_names {
                    let spec = frames.get(name).ok_or_else(|| ResolveError::MissingFrame(name.clone()))?;
                    list.push((name.clone(), Frame::from_pose(&spec.to_pose().map_err(ResolveError::Invalid)?)));
                }
                Scene::new(list)?
            }
        };
        let mut environment = match &self.surface {
            SurfaceSpec::None => Environment::free_space(),
            SurfaceSpec::Object => forceskill_core::scenario::press_environment(&object)?,
            SurfaceSpec::Plane { point, normal } => Environment::with_plane(Vector3::from(*point), Vector3::from(*normal))?,
        };
        environment.stiffness = self.contact.stiffness;
        environment.damping = self.contact.damping;
        environment.friction = self.contact.friction;
        let geometry = skill.model.geometry;
        let start_point = forceskill_core::demo::pose_point(&start, &geometry)?;
        let goal = match &self.goal {
            GoalSpec::Model => Goal::Model,
            GoalSpec::Point { point, frame } => {
                let v = Vector::from_column_slice(point);
                geometry.check_point(&v)?;
                Goal::Point { point: geometry.normalize(&v), frame: frame.clone() }
            }
        };
        Ok(ResolvedScene { scene, start: PlantState::at_rest(&geometry, start_point), environment, goal })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("scene is missing frame `{0}`")]
    MissingFrame(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] forceskill_core::Error),
}
