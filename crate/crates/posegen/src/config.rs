//! TOML description of the arm, payload, scene and camera.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::chain::{pose, DhRow, Joints, KinematicChain, Payload};
use crate::geometry::Aabb;
use crate::workspace::CollisionScene;
use crate::PosegenError;

pub const DEFAULT_CONFIG: &str = include_str!("../configs/ur3_like.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub dh: Vec<DhRow>,
    pub lower: Joints,
    pub upper: Joints,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSection {
    pub radius: f64,
    pub half_length: f64,
    #[serde(default)]
    pub mount_translation: [f64; 3],
    #[serde(default)]
    pub mount_rpy: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub link_radii: [f64; 6],
    #[serde(default = "yes")]
    pub self_collision: bool,
    pub table: Option<Aabb>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub home: Joints,
    /// Camera optical centre in the world frame.
    pub camera: [f64; 3],
    pub chain: ChainSection,
    pub payload: PayloadSection,
    pub scene: SceneSection,
}

impl PoseConfig {
    pub fn from_toml(text: &str) -> Result<Self, PosegenError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PosegenError::Config(e.to_string()))?;
        cfg.chain()?;
        cfg.scene().validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn chain(&self) -> Result<KinematicChain, PosegenError> {
        let dh: [DhRow; 6] = self
            .chain
            .dh
            .clone()
            .try_into()
            .map_err(|v: Vec<DhRow>| PosegenError::Config(format!("need 6 DH rows, got {}", v.len())))?;
        let chain = KinematicChain {
            dh,
            lower: self.chain.lower,
            upper: self.chain.upper,
            payload: Payload {
                radius: self.payload.radius,
                half_length: self.payload.half_length,
                mount: pose(self.payload.mount_translation, self.payload.mount_rpy),
            },
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn scene(&self) -> CollisionScene {
        CollisionScene { link_radii: self.scene.link_radii, table: self.scene.table, self_collision: self.scene.self_collision }
    }

    pub fn camera(&self) -> Point3<f64> {
        Point3::from(self.camera)
    }
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("bundled config is valid")
    }
}
