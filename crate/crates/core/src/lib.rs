//! Tracing benchmark core: a planar deformable-object simulator with a tactile
//! gripper, demonstration labeling, a chunked CVAE policy and trial evaluation.

pub mod config;
pub mod error;
pub mod eval;
pub mod expert;
pub mod geom;
pub mod labeling;
pub mod observe;
pub mod policy;
pub mod sim;
pub mod tactile;

pub use error::{Error, Result};
