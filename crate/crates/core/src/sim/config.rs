use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Object families the simulator can stand in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectPreset {
    Shoelace,
    Cable,
    Towel,
    Cloth,
    Rope,
    Napkin,
}

impl ObjectPreset {
    pub const ALL: [ObjectPreset; 6] = [
        ObjectPreset::Shoelace,
        ObjectPreset::Cable,
        ObjectPreset::Towel,
        ObjectPreset::Cloth,
        ObjectPreset::Rope,
        ObjectPreset::Napkin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectPreset::Shoelace => "shoelace",
            ObjectPreset::Cable => "cable",
            ObjectPreset::Towel => "towel",
            ObjectPreset::Cloth => "cloth",
            ObjectPreset::Rope => "rope",
            ObjectPreset::Napkin => "napkin",
        }
    }

    /// Fabric hems (traced edge of a 2-D object) rather than linear objects.
    pub fn is_planar(self) -> bool {
        matches!(
            self,
            ObjectPreset::Towel | ObjectPreset::Cloth | ObjectPreset::Napkin
        )
    }

    pub fn params(self) -> PresetParams {
        // friction, compliance, dangling pull, texture seed, stripe period, diameter
        let (friction, compliance, dangling_pull, texture_seed, texture_period, diameter) =
            match self {
                ObjectPreset::Shoelace => (0.35, 1e-8, 0.0, 11, 3.0, 0.003),
                ObjectPreset::Cable => (0.25, 2e-9, 0.0, 23, 6.0, 0.0045),
                ObjectPreset::Rope => (0.40, 5e-9, 0.0, 37, 4.0, 0.005),
                ObjectPreset::Towel => (0.45, 2e-8, 1.2, 41, 2.0, 0.005),
                ObjectPreset::Cloth => (0.30, 3e-8, 1.0, 53, 5.0, 0.0035),
                ObjectPreset::Napkin => (0.35, 2e-8, 0.8, 67, 2.5, 0.003),
            };
        PresetParams {
            friction,
            compliance,
            dangling_pull,
            texture_seed,
            texture_period,
            diameter,
        }
    }
}

impl fmt::Display for ObjectPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown object preset '{s}'")))
    }
}

/// Physical and rendering parameters that differ between presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    /// Pad-on-object friction coefficient.
    pub friction: f64,
    /// Distance-constraint compliance (m/N).
    pub compliance: f64,
    /// Lateral pull (N) at the grasp from fabric hanging outside the fingertips.
    pub dangling_pull: f64,
    pub texture_seed: u64,
    /// Stripe period of the tactile texture, in pixels.
    pub texture_period: f64,
    /// Object (or hem) thickness in meters.
    pub diameter: f64,
}

/// Initial shape of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Seeded random walk from the pinned end.
    Crumpled,
    /// Straight line from the pinned end along the seeded heading.
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Workspace {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            x_min: -0.15,
            x_max: 0.65,
            y_min: -0.4,
            y_max: 0.4,
        }
    }
}

/// Planar three-link arm carrying the gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub base_x: f64,
    pub base_y: f64,
    pub link_lengths: [f64; 3],
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            base_x: 0.2,
            base_y: -0.4,
            link_lengths: [0.35, 0.3, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Step length in seconds.
    pub dt: f64,
    pub solver_iterations: usize,
    /// Total curve length in meters.
    pub length: f64,
    pub n_particles: usize,
    pub preset: ObjectPreset,
    pub layout: Layout,
    pub workspace: Workspace,
    pub arm: ArmConfig,
    /// Sensor window extent along the finger (m).
    pub window_length: f64,
    /// Sensor window extent across the finger (m).
    pub window_width: f64,
    pub aperture_max: f64,
    /// Commanded aperture during tracing, as a fraction of the object diameter.
    pub nominal_aperture_ratio: f64,
    /// Normal force (N) at zero aperture; scales linearly with squeeze.
    pub grip_stiffness: f64,
    /// Lateral drag coefficient of the object at the grasp (N·s/m).
    pub lateral_damping: f64,
    /// Drag (N) of the untraced tail when the whole length lies on the table.
    pub tail_drag: f64,
    /// Pull-through tension (N) above which the trial counts as a collision.
    pub tension_limit: f64,
    /// Gripper-to-pinned-end distance (m) below which the trial counts as a collision.
    pub collision_radius: f64,
    pub max_speed: f64,
    pub max_angular_speed: f64,
    pub max_aperture_speed: f64,
    /// Arc-length fraction at which the gripper is placed on spawn.
    pub grasp_fraction: f64,
    /// Maximum magnitude (m) of the initial contact offset along the finger.
    pub grasp_offset: f64,
    /// Half-range (rad) of the initial heading of the curve.
    pub heading_spread: f64,
    /// Standard deviation (rad) of the per-segment turn of the random walk.
    pub walk_turn_sigma: f64,
    /// Arc-length fraction that counts as reaching the free end.
    pub stop_fraction: f64,
    /// Steps the grasp must stay past the stop fraction before the task is done.
    pub hold_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            solver_iterations: 20,
            length: 0.5,
            n_particles: 51,
            preset: ObjectPreset::Rope,
            layout: Layout::Crumpled,
            workspace: Workspace::default(),
            arm: ArmConfig::default(),
            window_length: 0.016,
            window_width: 0.016,
            aperture_max: 0.02,
            nominal_aperture_ratio: 0.5,
            grip_stiffness: 20.0,
            lateral_damping: 100.0,
            tail_drag: 0.3,
            tension_limit: 6.0,
            collision_radius: 0.01,
            max_speed: 0.4,
            max_angular_speed: 2.0,
            max_aperture_speed: 0.05,
            grasp_fraction: 0.04,
            grasp_offset: 0.0015,
            heading_spread: 25f64.to_radians(),
            walk_turn_sigma: 0.45,
            stop_fraction: 0.95,
            hold_steps: 15,
        }
    }
}

impl SimConfig {
    pub fn with_preset(preset: ObjectPreset) -> Self {
        Self {
            preset,
            ..Self::default()
        }
    }

    pub fn rest_length(&self) -> f64 {
        self.length / (self.n_particles - 1) as f64
    }

    pub fn preset_params(&self) -> PresetParams {
        self.preset.params()
    }

    pub fn nominal_aperture(&self) -> f64 {
        self.nominal_aperture_ratio * self.preset_params().diameter
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_particles < 3 {
            return bad("particle count must be at least 3");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.length > 0.0) {
            return bad("length must be positive");
        }
        if self.solver_iterations == 0 {
            return bad("solver_iterations must be at least 1");
        }
        if !(self.window_length > 0.0 && self.window_width > 0.0) {
            return bad("sensor window dimensions must be positive");
        }
        if !(self.max_speed > 0.0 && self.max_angular_speed > 0.0 && self.max_aperture_speed > 0.0)
        {
            return bad("rate limits must be positive");
        }
        if !(self.aperture_max > 0.0) {
            return bad("aperture_max must be positive");
        }
        if !(self.grasp_fraction > 0.0 && self.grasp_fraction <= 0.05) {
            return bad("grasp_fraction must lie in (0, 0.05]");
        }
        if !(self.stop_fraction > 0.9 && self.stop_fraction <= 1.0) {
            return bad("stop_fraction must lie in (0.9, 1]");
        }
        if !(self.lateral_damping > 0.0) {
            return bad("lateral_damping must be positive");
        }
        if self.arm.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return bad("arm link lengths must be positive");
        }
        let w = &self.workspace;
        if !(w.x_min < 0.0 && w.x_max > 0.0 && w.y_min < 0.0 && w.y_max > 0.0) {
            return bad("workspace must contain the pinned end at the origin");
        }
        Ok(())
    }
}
