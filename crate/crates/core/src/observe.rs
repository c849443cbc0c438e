//! Sensor readout of a world state into a policy observation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::labeling::Observation;
use crate::sim::{render_visual, SimConfig, WorldState};
use crate::tactile::{render_tactile, ContactStyle, FrameSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub visual_resolution: usize,
    pub tactile_height: usize,
    pub tactile_width: usize,
    /// Tactile pixels per meter.
    pub p2m: f32,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            visual_resolution: 64,
            tactile_height: 32,
            tactile_width: 32,
            p2m: 2000.0,
        }
    }
}

impl SensorConfig {
    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec {
            height: self.tactile_height,
            width: self.tactile_width,
            p2m: self.p2m,
        }
    }
}

/// Per-step noise seed so every frame of every episode draws distinct noise.
pub fn frame_noise_seed(episode_seed: u64, step: u64) -> u64 {
    episode_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(step.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ 0x94D0_49BB_1331_11EB
}

pub fn observe(
    world: &WorldState,
    config: &SimConfig,
    sensors: &SensorConfig,
    noise_seed: u64,
    timestamp: f64,
) -> Result<Observation> {
    let visual = render_visual(world, &config.workspace, sensors.visual_resolution)?;
    let style = ContactStyle::from(config.preset_params());
    let mut tactile = render_tactile(world, &sensors.frame_spec(), &style, noise_seed);
    tactile.timestamp = timestamp;
    let g = &world.gripper;
    Ok(Observation {
        kin: [g.pose.x as f32, g.pose.y as f32, g.pose.theta as f32, g.aperture as f32],
        visual: visual.pixels,
        tactile,
    })
}
