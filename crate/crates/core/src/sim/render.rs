//! Top-down orthographic rasterization of the scene.

use super::config::Workspace;
use super::world::WorldState;
use crate::error::{Error, Result};
use crate::geom::{point_segment_distance, Vec2};

pub const BACKGROUND: u8 = 0;
pub const ROPE_INTENSITY: u8 = 255;
pub const GRIPPER_INTENSITY: u8 = 128;

/// Square grayscale image, row-major, row index = image v.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }
}

/// Maps world meters onto pixel coordinates of a square view.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub resolution: usize,
    origin: Vec2,
    scale: f64,
}

impl View {
    /// Fits the workspace into the view, preserving aspect ratio and centering it.
    pub fn new(workspace: &Workspace, resolution: usize) -> Self {
        let w = workspace.x_max - workspace.x_min;
        let h = workspace.y_max - workspace.y_min;
        let extent = w.max(h);
        let center = Vec2::new(
            (workspace.x_min + workspace.x_max) / 2.0,
            (workspace.y_min + workspace.y_max) / 2.0,
        );
        Self {
            resolution,
            origin: center - Vec2::new(extent / 2.0, extent / 2.0),
            scale: resolution as f64 / extent,
        }
    }

    /// World point → continuous pixel coordinates (u right, v down; world +y is up).
    pub fn to_pixel(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            (p.x - self.origin.x) * self.scale,
            self.resolution as f64 - (p.y - self.origin.y) * self.scale,
        )
    }
}

/// Scene primitives, independent of simulator state.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub polyline: Vec<Vec2>,
    pub gripper: Option<Vec2>,
}

/// Rasterizes a scene. Pixel `(u, v)` is sampled at its center `(u + 0.5, v + 0.5)`.
pub fn render_scene(scene: &Scene, workspace: &Workspace, resolution: usize) -> Result<GrayImage> {
    if !(32..=256).contains(&resolution) {
        return Err(Error::Precondition(format!(
            "visual resolution {resolution} outside [32, 256]"
        )));
    }
    let view = View::new(workspace, resolution);
    let mut img = GrayImage::filled(resolution, resolution, BACKGROUND);

    if let Some(g) = scene.gripper {
        let c = view.to_pixel(g);
        let (cu, cv) = (c.x.floor() as i64, c.y.floor() as i64);
        for dv in -1..=1 {
            for du in -1..=1 {
                let (u, v) = (cu + du, cv + dv);
                if u >= 0 && v >= 0 && (u as usize) < resolution && (v as usize) < resolution {
                    img.pixels[v as usize * resolution + u as usize] = GRIPPER_INTENSITY;
                }
            }
        }
    }

    // Anti-aliased polyline: full intensity within 0.6 px, linear falloff to 1.6 px.
    const CORE: f64 = 0.6;
    const FALLOFF: f64 = 1.0;
    let pts: Vec<Vec2> = scene.polyline.iter().map(|p| view.to_pixel(*p)).collect();
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let pad = CORE + FALLOFF + 1.0;
        let u0 = (a.x.min(b.x) - pad).floor().max(0.0) as usize;
        let v0 = (a.y.min(b.y) - pad).floor().max(0.0) as usize;
        let u1 = ((a.x.max(b.x) + pad).ceil().max(0.0) as usize).min(resolution);
        let v1 = ((a.y.max(b.y) + pad).ceil().max(0.0) as usize).min(resolution);
        for v in v0..v1 {
            for u in u0..u1 {
                let center = Vec2::new(u as f64 + 0.5, v as f64 + 0.5);
                let d = point_segment_distance(center, a, b);
                let cover = (1.0 - (d - CORE) / FALLOFF).clamp(0.0, 1.0);
                let value = (cover * ROPE_INTENSITY as f64).round() as u8;
                let px = &mut img.pixels[v * resolution + u];
                *px = (*px).max(value);
            }
        }
    }
    Ok(img)
}

pub fn scene_of(world: &WorldState) -> Scene {
    Scene {
        polyline: world.rope.particles.clone(),
        gripper: Some(world.gripper.pose.position()),
    }
}

/// Top-down camera image of the world.
pub fn render_visual(world: &WorldState, workspace: &Workspace, resolution: usize) -> Result<GrayImage> {
    render_scene(&scene_of(world), workspace, resolution)
}
