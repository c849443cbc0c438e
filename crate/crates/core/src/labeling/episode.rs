use rayon::prelude::*;

use super::weights::{center_weight, completion_index, WeightNormalizer, MISSING_CONTACT_WEIGHT};
use crate::error::{Error, Result};
use crate::geom::{Pose2, Vec2};
use crate::sim::ObjectPreset;
use crate::tactile::{extract_contact, gripper_to_world, pixel_to_gripper, ExtractionParams, TactileFrame};

/// Observation at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// End-effector x, y, θ and aperture.
    pub kin: [f32; 4],
    /// Row-major top-down image, `visual_resolution²` bytes.
    pub visual: Vec<u8>,
    pub tactile: TactileFrame,
}

impl Observation {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.kin[0] as f64, self.kin[1] as f64, self.kin[2] as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub obs: Observation,
    /// Commanded target x, y, θ and aperture.
    pub action: [f32; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub p0: [f64; 2],
    pub rate_hz: f64,
    pub preset: ObjectPreset,
    pub seed: u64,
    pub visual_resolution: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pinned(&self) -> Vec2 {
        Vec2::new(self.p0[0], self.p0[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.len() < 2 {
            return Err(Error::Precondition(format!(
                "episode needs at least 2 steps, has {}",
                self.steps.len()
            )));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::Precondition("episode rate must be positive".into()));
        }
        let vis = self.visual_resolution * self.visual_resolution;
        for (t, s) in self.steps.iter().enumerate() {
            if s.obs.visual.len() != vis {
                return Err(Error::ShapeMismatch(format!("step {t}: visual image size")));
            }
            if s.obs.kin.iter().chain(&s.action).any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!("step {t}: non-finite values")));
            }
        }
        Ok(())
    }
}

/// Timestamp of the `t`-th frame at a constant rate.
pub fn frame_time(t: usize, rate_hz: f64) -> f64 {
    t as f64 / rate_hz
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpisode {
    pub episode: Episode,
    pub weights: Vec<f32>,
    pub completion: Vec<f32>,
    pub contact_found: Vec<bool>,
}

impl LabeledEpisode {
    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }
}

/// Extracts contacts, maps them to the world and derives per-step labels.
///
/// Steps without a contact get the missing-contact weight and repeat the
/// previous completion index (0 before the first contact).
pub fn label_episode(
    ep: &Episode,
    params: &ExtractionParams,
    normalizer: WeightNormalizer,
) -> Result<LabeledEpisode> {
    ep.validate()?;
    let contacts: Vec<Option<(Vec2, f64)>> = ep
        .steps
        .iter()
        .map(|s| {
            let est = extract_contact(&s.obs.tactile, params)?;
            let local = pixel_to_gripper(est.p_tac, &s.obs.tactile);
            let world = gripper_to_world(&local, &s.obs.pose());
            let w = center_weight(Some(&est), &s.obs.tactile, normalizer);
            Some((Vec2::new(world.x, world.y), w))
        })
        .collect();
    let (p_end, _) = contacts.last().copied().flatten().ok_or(Error::NoFinalContact)?;
    let p0 = ep.pinned();

    let mut weights = Vec::with_capacity(ep.len());
    let mut completion = Vec::with_capacity(ep.len());
    let mut found = Vec::with_capacity(ep.len());
    let mut last = 0.0;
    for c in &contacts {
        match c {
            Some((p, w)) => {
                last = completion_index(*p, p0, p_end)?;
                weights.push(*w as f32);
                found.push(true);
            }
            None => {
                weights.push(MISSING_CONTACT_WEIGHT as f32);
                found.push(false);
            }
        }
        completion.push(last as f32);
    }
    Ok(LabeledEpisode {
        episode: ep.clone(),
        weights,
        completion,
        contact_found: found,
    })
}

pub fn label_all(
    episodes: &[Episode],
    params: &ExtractionParams,
    normalizer: WeightNormalizer,
) -> Result<Vec<LabeledEpisode>> {
    episodes
        .par_iter()
        .map(|ep| label_episode(ep, params, normalizer))
        .collect()
}
