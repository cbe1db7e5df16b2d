//! Collision-free working space of a 6-DoF arm carrying a cylindrical
//! payload, and stratified selection of capture poses from it.

pub mod chain;
pub mod config;
pub mod geometry;
pub mod halton;
pub mod io;
pub mod sampling;
pub mod workspace;

pub use chain::{DhRow, FkResult, Joints, KinematicChain, Payload};
pub use geometry::{Aabb, Capsule};
pub use sampling::{Bins, Selection, Spherical};
pub use workspace::{CollisionScene, PoseRecord, Rejections, Workspace};

#[derive(Debug, thiserror::Error)]
pub enum PosegenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no feasible pose among {candidates} candidates; rejections: {rejections}")]
    NoFeasible { candidates: usize, rejections: Rejections },
    #[error("malformed workspace data: {0}")]
    Data(String),
}
