//! Synthetic tactile images of the grasped curve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use super::frame::{FrameSpec, TactileFrame};
use crate::geom::Vec2;
use crate::sim::{contact_point, PresetParams, WorldState};

pub const BACKGROUND_LEVEL: f64 = 10.0;
pub const CONTACT_LEVEL: f64 = 170.0;
pub const TEXTURE_AMPLITUDE: f64 = 40.0;
pub const NOISE_SIGMA: f64 = 4.0;

/// Appearance of the pressed region for one object type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactStyle {
    /// Imprint width across the object, in meters.
    pub diameter: f64,
    pub texture_seed: u64,
    /// Stripe period along the object, in pixels.
    pub texture_period: f64,
}

impl From<PresetParams> for ContactStyle {
    fn from(p: PresetParams) -> Self {
        Self {
            diameter: p.diameter,
            texture_seed: p.texture_seed,
            texture_period: p.texture_period,
        }
    }
}

/// Imprint of the object on the gel, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Imprint {
    /// Contact point `(u, v)`.
    pub center: Vec2,
    /// Object tangent angle in the image plane.
    pub angle: f64,
}

/// Renders a frame with an optional imprint plus Gaussian pixel noise.
///
/// The imprint is an elliptical pressed patch centered on the contact,
/// elongated along the object tangent, with stripes across the object.
pub fn render_imprint(
    spec: &FrameSpec,
    imprint: Option<Imprint>,
    style: &ContactStyle,
    noise_seed: u64,
    timestamp: f64,
) -> TactileFrame {
    let mut frame = TactileFrame::blank(spec, 0);
    frame.timestamp = timestamp;
    let p2m = spec.p2m as f64;
    let half_width = (style.diameter * p2m / 2.0).max(1.0);
    let half_length = half_width + 2.0;
    let phase = (style.texture_seed % 997) as f64 * 0.618_034 * 2.0 * PI;
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);

    for v in 0..spec.height {
        for u in 0..spec.width {
            let mut level = BACKGROUND_LEVEL;
            if let Some(imp) = imprint {
                let d = Vec2::new(u as f64 + 0.5, v as f64 + 0.5) - imp.center;
                let (s, c) = imp.angle.sin_cos();
                let along = c * d.x + s * d.y;
                let across = -s * d.x + c * d.y;
                let rho = ((along / half_length).powi(2) + (across / half_width).powi(2)).sqrt();
                let dist = d.norm();
                // Signed distance to the patch outline along the ray from its center.
                let sd = if rho > 1e-12 { dist * (1.0 - 1.0 / rho) } else { -half_width };
                let cover = (0.5 - sd).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let stripe = (2.0 * PI * along / style.texture_period + phase).sin();
                    let inside = CONTACT_LEVEL + TEXTURE_AMPLITUDE * stripe;
                    level += cover * (inside - BACKGROUND_LEVEL);
                }
            }
            let value = level + noise.sample(&mut rng);
            frame.pixels[v * spec.width + u] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    frame
}

/// Where the ground-truth contact would appear in the tactile image.
pub fn true_imprint(world: &WorldState, spec: &FrameSpec) -> Option<Imprint> {
    let (s, p) = contact_point(world)?;
    let pose = world.gripper.pose;
    let local = pose.inverse_transform_point(p);
    let m = world.rope.segment_index(s);
    let tangent = world.rope.particles[m + 1] - world.rope.particles[m];
    let t = pose.inverse_transform_vector(tangent);
    let p2m = spec.p2m as f64;
    Some(Imprint {
        center: Vec2::new(
            spec.width as f64 / 2.0 + local.x * p2m,
            spec.height as f64 / 2.0 + local.y * p2m,
        ),
        angle: t.y.atan2(t.x),
    })
}

/// Tactile image of the world; background plus noise when nothing is grasped.
pub fn render_tactile(
    world: &WorldState,
    spec: &FrameSpec,
    style: &ContactStyle,
    noise_seed: u64,
) -> TactileFrame {
    render_imprint(spec, true_imprint(world, spec), style, noise_seed, world.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{taut_line, ObjectPreset, SimConfig};

    #[test]
    fn empty_frame_stays_dark() {
        let style = ContactStyle::from(ObjectPreset::Rope.params());
        let f = render_imprint(&FrameSpec::default(), None, &style, 3, 0.0);
        assert!(f.pixels.iter().all(|&p| p <= 40));
    }

    #[test]
    fn centered_contact_imprint_centroid() {
        let config = SimConfig::default();
        let world = taut_line(&config, 0.2).unwrap();
        let spec = FrameSpec::default();
        let style = ContactStyle::from(config.preset_params());
        let f = render_tactile(&world, &spec, &style, 1);
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for v in 0..32 {
            for u in 0..32 {
                if f.get(u, v) > 90 {
                    su += u as f64 + 0.5;
                    sv += v as f64 + 0.5;
                    n += 1.0;
                }
            }
        }
        assert!(n > 20.0);
        assert!((su / n - 16.0).abs() <= 1.0 && (sv / n - 16.0).abs() <= 1.0);
    }
}
