//! Per-step label formulas: contact-centering weight and completion index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::tactile::{ContactEstimate, TactileFrame};

/// Distance scale used to normalize the contact eccentricity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNormalizer {
    /// `‖c‖₂`, the distance from the pixel origin to the center.
    #[default]
    HalfDiagonal,
    /// `W/2`.
    HalfWidth,
}

impl WeightNormalizer {
    pub fn scale(self, frame: &TactileFrame) -> f64 {
        match self {
            WeightNormalizer::HalfDiagonal => frame.center().norm(),
            WeightNormalizer::HalfWidth => frame.width as f64 / 2.0,
        }
    }
}

/// Weight of a missing contact: treated as maximally eccentric.
pub const MISSING_CONTACT_WEIGHT: f64 = 0.367_879_441_171_442_33;

/// `exp(−‖p_tac − c‖ / N)`, or `e⁻¹` without a contact.
pub fn center_weight(
    estimate: Option<&ContactEstimate>,
    frame: &TactileFrame,
    normalizer: WeightNormalizer,
) -> f64 {
    match estimate {
        Some(e) => weight_at(e.p_tac, frame, normalizer),
        None => MISSING_CONTACT_WEIGHT,
    }
}

pub fn weight_at(p_tac: Vec2, frame: &TactileFrame, normalizer: WeightNormalizer) -> f64 {
    (-(p_tac - frame.center()).norm() / normalizer.scale(frame)).exp()
}

/// `clamp(‖p_t − p_0‖ / ‖p_T − p_0‖, 0, 1)`.
pub fn completion_index(p_t: Vec2, p_0: Vec2, p_end: Vec2) -> Result<f64> {
    let total = (p_end - p_0).norm();
    if !(total > 0.0) {
        return Err(Error::DegenerateEpisode);
    }
    Ok(((p_t - p_0).norm() / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tactile::{FrameSpec, Method};

    fn est(u: f64, v: f64) -> ContactEstimate {
        ContactEstimate {
            p_tac: Vec2::new(u, v),
            method: Method::EllipseFit,
            contact_area: 10,
            major_axis_angle: 0.0,
        }
    }

    #[test]
    fn weight_anchor_values() {
        let f = TactileFrame::blank(&FrameSpec::default(), 0);
        let hd = WeightNormalizer::HalfDiagonal;
        assert_eq!(center_weight(Some(&est(16.0, 16.0)), &f, hd), 1.0);
        assert!((MISSING_CONTACT_WEIGHT - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(center_weight(None, &f, hd), MISSING_CONTACT_WEIGHT);
        let w = center_weight(Some(&est(24.0, 16.0)), &f, hd);
        assert!((w - (-8.0 / 512f64.sqrt()).exp()).abs() < 1e-12);
        let w = center_weight(Some(&est(24.0, 16.0)), &f, WeightNormalizer::HalfWidth);
        assert!((w - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn completion_clamps() {
        let p0 = Vec2::zeros();
        let pt = Vec2::new(0.4, 0.0);
        assert_eq!(completion_index(p0, p0, pt).unwrap(), 0.0);
        assert_eq!(completion_index(pt, p0, pt).unwrap(), 1.0);
        assert!((completion_index(Vec2::new(0.1, 0.0), p0, pt).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(completion_index(Vec2::new(0.5, 0.0), p0, pt).unwrap(), 1.0);
        assert!(matches!(completion_index(pt, p0, p0), Err(Error::DegenerateEpisode)));
    }
}
