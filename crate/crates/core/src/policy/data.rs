//! Turning labeled episodes into network inputs and chunk targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, PolicyConfig, ACTION_DIM, KIN_DIM};
use super::net::{ChunkTarget, NetInput};
use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use crate::labeling::{LabeledEpisode, Observation};

const STD_FLOOR: f64 = 1e-6;

/// Per-dimension statistics for kinematics and pose-relative actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub kin_mean: [f64; KIN_DIM],
    pub kin_std: [f64; KIN_DIM],
    pub action_mean: [f64; ACTION_DIM],
    pub action_std: [f64; ACTION_DIM],
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            kin_mean: [0.0; KIN_DIM],
            kin_std: [1.0; KIN_DIM],
            action_mean: [0.0; ACTION_DIM],
            action_std: [1.0; ACTION_DIM],
        }
    }
}

fn kin_f64(obs: &Observation) -> [f64; KIN_DIM] {
    obs.kin.map(|v| v as f64)
}

/// Action expressed relative to the pose it was planned from.
pub fn relative_action(action: &[f32; ACTION_DIM], kin: &[f64; KIN_DIM]) -> [f64; ACTION_DIM] {
    [
        action[0] as f64 - kin[0],
        action[1] as f64 - kin[1],
        wrap_angle(action[2] as f64 - kin[2]),
        action[3] as f64 - kin[3],
    ]
}

pub fn absolute_action(rel: &[f64; ACTION_DIM], kin: &[f64; KIN_DIM]) -> [f64; ACTION_DIM] {
    [
        rel[0] + kin[0],
        rel[1] + kin[1],
        wrap_angle(rel[2] + kin[2]),
        rel[3] + kin[3],
    ]
}

fn mean_std<const N: usize>(rows: impl Iterator<Item = [f64; N]>) -> ([f64; N], [f64; N]) {
    let mut n = 0usize;
    let mut sum = [0.0; N];
    let mut sq = [0.0; N];
    for r in rows {
        n += 1;
        for i in 0..N {
            sum[i] += r[i];
            sq[i] += r[i] * r[i];
        }
    }
    let n = n.max(1) as f64;
    let mean = sum.map(|s| s / n);
    let mut std = [0.0; N];
    for i in 0..N {
        std[i] = (sq[i] / n - mean[i] * mean[i]).max(0.0).sqrt().max(STD_FLOOR);
    }
    (mean, std)
}

impl Normalizer {
    /// Statistics over every step and every chunk offset of the given episodes.
    pub fn fit(episodes: &[&LabeledEpisode], chunk: usize) -> Self {
        let (kin_mean, kin_std) = mean_std(episodes.iter().flat_map(|e| e.episode.steps.iter().map(|s| kin_f64(&s.obs))));
        let (action_mean, action_std) = mean_std(episodes.iter().flat_map(|e| {
            let steps = &e.episode.steps;
            (0..steps.len()).flat_map(move |t| {
                let kin = kin_f64(&steps[t].obs);
                (0..chunk).map(move |j| relative_action(&steps[(t + j).min(steps.len() - 1)].action, &kin))
            })
        }));
        Self {
            kin_mean,
            kin_std,
            action_mean,
            action_std,
        }
    }

    pub fn kin(&self, kin: &[f64; KIN_DIM]) -> [f64; KIN_DIM] {
        std::array::from_fn(|i| (kin[i] - self.kin_mean[i]) / self.kin_std[i])
    }

    pub fn action(&self, rel: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|i| (rel[i] - self.action_mean[i]) / self.action_std[i])
    }

    pub fn denormalize_action(&self, a: &[f64]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|i| a[i] * self.action_std[i] + self.action_mean[i])
    }
}

/// Photometric jitter applied to one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photometric {
    pub brightness: f64,
    pub contrast: f64,
    pub gamma: f64,
}

impl Photometric {
    pub const IDENTITY: Photometric = Photometric {
        brightness: 1.0,
        contrast: 1.0,
        gamma: 1.0,
    };

    /// Brightness ×[0.8, 1.2], contrast ×[0.8, 1.25], gamma in [0.8, 1.25].
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            brightness: rng.random_range(0.8..=1.2),
            contrast: rng.random_range(0.8..=1.25),
            gamma: rng.random_range(0.8..=1.25),
        }
    }

    /// Lookup table from 8-bit intensity to the jittered value in [0, 1].
    pub fn table(&self, pixels: &[u8]) -> [f64; 256] {
        let mean = pixels.iter().map(|&p| p as f64).sum::<f64>() / (255.0 * pixels.len().max(1) as f64);
        let m = mean * self.brightness;
        std::array::from_fn(|i| {
            let x = i as f64 / 255.0 * self.brightness;
            ((x - m) * self.contrast + m).clamp(0.0, 1.0).powf(self.gamma)
        })
    }
}

/// Means of non-overlapping `patch × patch` blocks, mapped through `table`.
pub fn patch_means(pixels: &[u8], height: usize, width: usize, patch: usize, table: &[f64; 256]) -> Vec<f64> {
    let (ph, pw) = (height / patch, width / patch);
    let mut out = vec![0.0; ph * pw];
    for r in 0..height {
        let row = &pixels[r * width..(r + 1) * width];
        let base = (r / patch) * pw;
        for (c, &p) in row.iter().enumerate() {
            out[base + c / patch] += table[p as usize];
        }
    }
    let inv = 1.0 / (patch * patch) as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

fn identity_table() -> [f64; 256] {
    std::array::from_fn(|i| i as f64 / 255.0)
}

/// Builds network input from an observation.
pub fn featurize(
    obs: &Observation,
    config: &PolicyConfig,
    norm: &Normalizer,
    ablation: Ablation,
    jitter: Option<(Photometric, Photometric)>,
) -> Result<NetInput> {
    let res = config.visual_resolution;
    if obs.visual.len() != res * res
        || obs.tactile.height != config.tactile_height
        || obs.tactile.width != config.tactile_width
    {
        return Err(Error::ShapeMismatch(format!(
            "observation does not match policy input ({res}² visual, {}×{} tactile)",
            config.tactile_height, config.tactile_width
        )));
    }
    let (tv, tt) = match jitter {
        Some((v, t)) => (v.table(&obs.visual), t.table(&obs.tactile.pixels)),
        None => (identity_table(), identity_table()),
    };
    let visual = if ablation == Ablation::Vision {
        vec![0.0; config.visual_features()]
    } else {
        patch_means(&obs.visual, res, res, config.visual_patch, &tv)
    };
    let tactile = if ablation == Ablation::Tactile {
        vec![0.0; config.tactile_features()]
    } else {
        patch_means(
            &obs.tactile.pixels,
            config.tactile_height,
            config.tactile_width,
            config.tactile_patch,
            &tt,
        )
    };
    Ok(NetInput {
        visual,
        tactile,
        kin: norm.kin(&kin_f64(obs)),
    })
}

/// Chunk target starting at step `t`; steps past the end repeat the last one.
pub fn chunk_target(ep: &LabeledEpisode, t: usize, chunk: usize, norm: &Normalizer, ablation: Ablation) -> ChunkTarget {
    let steps = &ep.episode.steps;
    let kin = kin_f64(&steps[t].obs);
    let mut actions = Vec::with_capacity(chunk * ACTION_DIM);
    let mut weights = Vec::with_capacity(chunk);
    let mut completion = Vec::with_capacity(chunk);
    for j in 0..chunk {
        let i = (t + j).min(steps.len() - 1);
        actions.extend(norm.action(&relative_action(&steps[i].action, &kin)));
        weights.push(if ablation == Ablation::Center {
            1.0
        } else {
            ep.weights[i] as f64
        });
        completion.push(ep.completion[i] as f64);
    }
    ChunkTarget {
        actions,
        weights,
        completion,
    }
}
