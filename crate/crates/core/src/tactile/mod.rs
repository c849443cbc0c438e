//! Tactile sensing: synthetic images, contact extraction and frame transforms.

pub mod ellipse;
pub mod extract;
pub mod frame;
pub mod render;
pub mod transform;

pub use extract::{extract_contact, ContactEstimate, ExtractionParams, Method};
pub use frame::{FrameSpec, TactileFrame};
pub use render::{render_imprint, render_tactile, true_imprint, ContactStyle, Imprint};
pub use transform::{gripper_to_pixel, gripper_to_world, pixel_to_gripper, world_to_gripper};
