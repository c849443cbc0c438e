use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PolicyConfig, TrainConfig};
use super::data::{chunk_target, featurize, Normalizer, Photometric};
use super::loss::LossBreakdown;
use super::net::{ChunkTarget, LossWeights, NetInput, PolicyNet};
use super::Policy;
use crate::error::{Error, Result};
use crate::labeling::LabeledEpisode;

/// One labeled training example.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: NetInput,
    pub target: ChunkTarget,
}

/// Mean losses over a batch and the gradient of the mean total.
///
/// `eps[i]` is the latent noise of sample `i` (`None` uses `z = μ`). Samples
/// are evaluated in parallel and reduced in order.
pub fn batch_loss(
    net: &PolicyNet,
    samples: &[Sample],
    eps: &[Option<Vec<f64>>],
    weights: LossWeights,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
    if samples.is_empty() {
        return Err(Error::Precondition("batch must not be empty".into()));
    }
    if eps.len() != samples.len() {
        return Err(Error::ShapeMismatch("one noise vector per sample".into()));
    }
    let n = net.num_params();
    let results: Vec<(LossBreakdown, Option<Vec<f64>>)> = samples
        .par_iter()
        .zip(eps)
        .map(|(s, e)| {
            let mut g = with_grad.then(|| vec![0.0; n]);
            let b = net.sample_loss(&s.input, &s.target, e.as_deref(), weights, g.as_deref_mut())?;
            Ok((b, g))
        })
        .collect::<Result<_>>()?;
    let parts: Vec<LossBreakdown> = results.iter().map(|r| r.0).collect();
    let mean = LossBreakdown::mean(&parts, weights);
    let grad = with_grad.then(|| {
        let mut acc = vec![0.0; n];
        for (_, g) in &results {
            for (a, v) in acc.iter_mut().zip(g.as_ref().expect("gradient requested")) {
                *a += v;
            }
        }
        let inv = 1.0 / samples.len() as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
        acc
    });
    Ok((mean, grad))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub curves: Vec<EpochLoss>,
    /// Epoch (1-based) whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
    pub train_episodes: Vec<usize>,
    pub val_episodes: Vec<usize>,
}

/// Seeded episode split; a single episode is used for both sides.
pub fn split_episodes(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5B117));
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains from a seeded initialization and keeps the lowest-validation-loss parameters.
pub fn train(episodes: &[LabeledEpisode], pcfg: &PolicyConfig, tcfg: &TrainConfig) -> Result<(Policy, TrainReport)> {
    train_with_progress(episodes, pcfg, tcfg, |_| {})
}

pub fn train_with_progress(
    episodes: &[LabeledEpisode],
    pcfg: &PolicyConfig,
    tcfg: &TrainConfig,
    mut progress: impl FnMut(&EpochLoss),
) -> Result<(Policy, TrainReport)> {
    pcfg.validate()?;
    tcfg.validate()?;
    if episodes.is_empty() {
        return Err(Error::Precondition("training needs at least one episode".into()));
    }
    for ep in episodes {
        ep.episode.validate()?;
        if ep.weights.len() != ep.len() || ep.completion.len() != ep.len() {
            return Err(Error::ShapeMismatch("labels do not match episode length".into()));
        }
    }
    let (train_idx, val_idx) = split_episodes(episodes.len(), tcfg.val_fraction, tcfg.seed);
    let val_idx_eff = if val_idx.is_empty() { train_idx.clone() } else { val_idx.clone() };
    let train_eps: Vec<&LabeledEpisode> = train_idx.iter().map(|&i| &episodes[i]).collect();
    let norm = Normalizer::fit(&train_eps, pcfg.chunk);
    let ablation = tcfg.ablation;
    let weights = LossWeights {
        lambda_reg: tcfg.lambda_reg,
        lambda_task: tcfg.effective_lambda_task(),
    };

    let mut net = PolicyNet::new(pcfg, tcfg.seed)?;
    let mut report = TrainReport {
        train_episodes: train_idx.clone(),
        val_episodes: val_idx.clone(),
        ..TrainReport::default()
    };

    // Validation: every start of every validation episode, no jitter, z = μ.
    let val_samples: Vec<Sample> = val_idx_eff
        .iter()
        .flat_map(|&i| (0..episodes[i].len()).map(move |t| (i, t)))
        .map(|(i, t)| {
            let ep = &episodes[i];
            Ok(Sample {
                input: featurize(&ep.episode.steps[t].obs, pcfg, &norm, ablation, None)?,
                target: chunk_target(ep, t, pcfg.chunk, &norm, ablation),
            })
        })
        .collect::<Result<_>>()?;
    let val_eps = vec![None; val_samples.len()];
    // Without augmentation, training inputs never change; cache them.
    let cached: Option<Vec<Vec<NetInput>>> = if tcfg.augment {
        None
    } else {
        Some(
            train_eps
                .iter()
                .map(|ep| {
                    ep.episode
                        .steps
                        .iter()
                        .map(|s| featurize(&s.obs, pcfg, &norm, ablation, None))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        )
    };

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x7EA1));
    let mut adam = Adam::new(net.num_params(), tcfg.lr);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for epoch in 1..=tcfg.epochs {
        let mut picks: Vec<(usize, usize)> = Vec::with_capacity(train_eps.len() * tcfg.samples_per_episode);
        for (e, ep) in train_eps.iter().enumerate() {
            for _ in 0..tcfg.samples_per_episode {
                picks.push((e, rng.random_range(0..ep.len())));
            }
        }
        picks.shuffle(&mut rng);
        let mut parts = Vec::with_capacity(picks.len());
        for batch in picks.chunks(tcfg.batch_size) {
            let jitter: Vec<Option<(Photometric, Photometric)>> = batch
                .iter()
                .map(|_| {
                    tcfg.augment
                        .then(|| (Photometric::sample(&mut rng), Photometric::sample(&mut rng)))
                })
                .collect();
            let eps: Vec<Option<Vec<f64>>> = batch
                .iter()
                .map(|_| Some((0..pcfg.latent_dim).map(|_| rng.sample(StandardNormal)).collect()))
                .collect();
            let samples: Vec<Sample> = batch
                .par_iter()
                .zip(&jitter)
                .map(|(&(e, t), j)| {
                    let ep = train_eps[e];
                    let input = match &cached {
                        Some(c) => c[e][t].clone(),
                        None => featurize(&ep.episode.steps[t].obs, pcfg, &norm, ablation, *j)?,
                    };
                    Ok(Sample {
                        input,
                        target: chunk_target(ep, t, pcfg.chunk, &norm, ablation),
                    })
                })
                .collect::<Result<_>>()?;
            let (b, grad) = batch_loss(&net, &samples, &eps, weights, true)?;
            if !b.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite training loss {b:?}"),
                });
            }
            parts.extend(std::iter::repeat_n(b, batch.len()));
            adam.step(&mut net.params, &grad.expect("gradient requested"));
        }
        let (val, _) = batch_loss(&net, &val_samples, &val_eps, weights, false)?;
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("non-finite validation loss {val:?}"),
            });
        }
        let record = EpochLoss {
            epoch,
            train: LossBreakdown::mean(&parts, weights),
            val,
        };
        progress(&record);
        report.curves.push(record);
        if best.as_ref().is_none_or(|(v, _)| val.total < *v) {
            best = Some((val.total, net.params.clone()));
            report.best_epoch = Some(epoch);
            report.best_val = Some(val.total);
        }
    }
    if let Some((_, params)) = best {
        net.params = params;
    }
    Ok((
        Policy {
            net,
            norm,
            ablation,
            train_config: tcfg.clone(),
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (t, v) = split_episodes(25, 0.1, 1);
        assert_eq!(v.len(), 3);
        assert_eq!(t.len(), 22);
        assert!(v.iter().all(|i| !t.contains(i)));
        assert_eq!(split_episodes(25, 0.1, 1), (t, v));
        let (t1, v1) = split_episodes(1, 0.1, 1);
        assert_eq!((t1, v1), (vec![0], vec![]));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[2.0, -3.0]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
