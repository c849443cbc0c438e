//! Chunked CVAE policy with center-weighted reconstruction, KL and completion losses.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod loss;
pub mod net;
pub mod train;

use std::collections::VecDeque;

pub use config::{Ablation, PolicyConfig, TrainConfig, ACTION_DIM, KIN_DIM};
pub use data::{featurize, Normalizer, Photometric};
pub use loss::{center_loss, kl_loss, task_loss, LossBreakdown};
pub use net::{ChunkTarget, LossWeights, NetInput, PolicyNet, RawPrediction};
pub use train::{batch_loss, split_episodes, train, train_with_progress, Adam, EpochLoss, Sample, TrainReport};

use crate::error::{Error, Result};
use crate::eval::Controller;
use crate::geom::Pose2;
use crate::labeling::Observation;
use crate::sim::{GripperAction, WorldState};

/// Trained network with its normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: PolicyNet,
    pub norm: Normalizer,
    pub ablation: Ablation,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPrediction {
    /// Absolute target x, y, θ, aperture for each of the k steps.
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub completion: Vec<f64>,
}

impl Policy {
    /// Decodes one chunk with the latent at the prior mean.
    pub fn infer(&self, obs: &Observation) -> Result<ChunkPrediction> {
        let c = &self.net.config;
        let input = featurize(obs, c, &self.norm, self.ablation, None)?;
        let raw = self.net.decode(&input, &vec![0.0; c.latent_dim])?;
        let kin = obs.kin.map(|v| v as f64);
        let actions = raw
            .actions
            .chunks_exact(ACTION_DIM)
            .map(|a| data::absolute_action(&self.norm.denormalize_action(a), &kin))
            .collect::<Vec<_>>();
        if actions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                detail: "non-finite policy output".into(),
            });
        }
        Ok(ChunkPrediction {
            actions,
            completion: raw.completion,
        })
    }
}

/// Executes each predicted chunk open-loop, re-inferring when it runs out.
pub struct PolicyController<'a> {
    policy: &'a Policy,
    queue: VecDeque<GripperAction>,
    pub inferences: usize,
}

impl<'a> PolicyController<'a> {
    pub fn new(policy: &'a Policy) -> Self {
        Self {
            policy,
            queue: VecDeque::new(),
            inferences: 0,
        }
    }
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, _world: &WorldState, obs: Option<&Observation>) -> Result<GripperAction> {
        if self.queue.is_empty() {
            let obs = obs.ok_or_else(|| Error::Precondition("policy needs observations".into()))?;
            let pred = self.policy.infer(obs)?;
            self.inferences += 1;
            self.queue.extend(pred.actions.iter().map(|a| GripperAction {
                target_pose: Pose2::new(a[0], a[1], a[2]),
                target_aperture: a[3],
            }));
        }
        Ok(self.queue.pop_front().expect("chunk is nonempty"))
    }
}
