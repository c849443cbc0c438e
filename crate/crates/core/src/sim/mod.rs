//! Planar simulation of a pinned deformable curve traced by a tactile gripper.

pub mod arm;
pub mod config;
pub mod render;
pub mod rope;
pub mod world;

pub use arm::ArmState;
pub use config::{ArmConfig, Layout, ObjectPreset, PresetParams, SimConfig, Workspace};
pub use render::{render_scene, render_visual, GrayImage, Scene, View};
pub use rope::RopeState;
pub use world::{
    clamp_action, contact_point, spawn, step, taut_line, GraspState, GripperAction, GripperState,
    Status, WorldState,
};
