#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tracebench::expert::{record_demos, ExpertGains};
use tracebench::labeling::{label_all, LabeledEpisode, WeightNormalizer};
use tracebench::observe::SensorConfig;
use tracebench::policy::{ChunkTarget, LossWeights, NetInput, PolicyConfig, PolicyNet, Sample};
use tracebench::sim::{ObjectPreset, SimConfig};
use tracebench::tactile::ExtractionParams;

/// Small network (just over 500 parameters) for finite-difference checks.
pub fn small_config() -> PolicyConfig {
    PolicyConfig {
        chunk: 4,
        latent_dim: 2,
        visual_resolution: 16,
        visual_patch: 8,
        tactile_height: 8,
        tactile_width: 8,
        tactile_patch: 4,
        visual_embed: 4,
        tactile_embed: 3,
        kin_embed: 3,
        encoder_hidden: 6,
        decoder_hidden: 8,
    }
}

pub const DEFAULT_WEIGHTS: LossWeights = LossWeights {
    lambda_reg: 100.0,
    lambda_task: 100.0,
};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_sample(config: &PolicyConfig, rng: &mut ChaCha8Rng) -> Sample {
    let k = config.chunk;
    Sample {
        input: NetInput {
            visual: (0..config.visual_features()).map(|_| rng.random_range(0.0..1.0)).collect(),
            tactile: (0..config.tactile_features()).map(|_| rng.random_range(0.0..1.0)).collect(),
            kin: std::array::from_fn(|_| normal(rng)),
        },
        target: ChunkTarget {
            actions: (0..4 * k).map(|_| normal(rng)).collect(),
            weights: (0..k).map(|_| rng.random_range((-1f64).exp()..=1.0)).collect(),
            completion: (0..k).map(|_| rng.random_range(0.0..1.0)).collect(),
        },
    }
}

pub fn random_batch(config: &PolicyConfig, n: usize, seed: u64) -> (Vec<Sample>, Vec<Option<Vec<f64>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n).map(|_| random_sample(config, &mut rng)).collect();
    let eps = (0..n)
        .map(|_| Some((0..config.latent_dim).map(|_| normal(&mut rng)).collect()))
        .collect();
    (samples, eps)
}

/// Network with seeded parameters scaled up so every branch carries signal.
pub fn random_net(config: &PolicyConfig, seed: u64) -> PolicyNet {
    let mut net = PolicyNet::new(config, seed).unwrap();
    net.params.iter_mut().for_each(|p| *p *= 1.5);
    net
}

pub fn demo_episodes(n: usize, preset: ObjectPreset, seed: u64) -> Vec<LabeledEpisode> {
    let config = SimConfig::with_preset(preset);
    let (eps, _) = record_demos(n, &config, &SensorConfig::default(), &ExpertGains::default(), seed).unwrap();
    label_all(&eps, &ExtractionParams::default(), WeightNormalizer::default()).unwrap()
}

/// Largest relative error between the analytic gradient of the batch total and
/// central differences with step `h`, over every parameter.
pub fn max_gradient_error(net: &PolicyNet, samples: &[Sample], eps: &[Option<Vec<f64>>], h: f64) -> f64 {
    use tracebench::policy::batch_loss;
    let (_, grad) = batch_loss(net, samples, eps, DEFAULT_WEIGHTS, true).unwrap();
    let grad = grad.unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = batch_loss(&probe, samples, eps, DEFAULT_WEIGHTS, false).unwrap().0.total;
        probe.params[i] = orig - h;
        let down = batch_loss(&probe, samples, eps, DEFAULT_WEIGHTS, false).unwrap().0.total;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((grad[i] - numeric).abs() / scale);
        }
    }
    worst
}

use tracebench::eval::Controller;
use tracebench::expert::expert_action;
use tracebench::labeling::Observation;
use tracebench::sim::{GripperAction, WorldState};

/// Expert command plus seeded lateral and heading disturbances; some seeds
/// push hard enough to lose the rope.
pub struct WobblyController {
    pub config: SimConfig,
    pub lateral_sigma: f64,
    rng: ChaCha8Rng,
}

impl WobblyController {
    pub fn new(config: SimConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3C0B);
        let lateral_sigma = rng.random_range(0.0..0.006);
        Self {
            config,
            lateral_sigma,
            rng,
        }
    }
}

impl Controller for WobblyController {
    fn uses_observations(&self) -> bool {
        false
    }

    fn act(&mut self, world: &WorldState, _obs: Option<&Observation>) -> tracebench::Result<GripperAction> {
        let mut a = expert_action(world, &ExpertGains::default(), &self.config);
        let y = a.target_pose.y_axis();
        let push = self.lateral_sigma * normal(&mut self.rng);
        a.target_pose.x += push * y.x;
        a.target_pose.y += push * y.y;
        a.target_pose.theta += 0.05 * normal(&mut self.rng);
        Ok(a)
    }
}

use tracebench::sim::{contact_point, spawn, step, Status};

#[derive(Debug, Default, Clone)]
pub struct SweepStats {
    pub steps: usize,
    pub pin_violations: usize,
    pub max_strain: f64,
    pub nondeterministic: usize,
    /// Steps where "Dropped" and "contact left the window" disagree.
    pub drop_mismatches: usize,
    /// Running steps whose geometric contact disagrees with the tracked offset.
    pub contact_mismatches: usize,
    pub drops: usize,
}

fn sweep_once(seed: u64, budget: usize) -> (SweepStats, Vec<Vec<u8>>) {
    let preset = ObjectPreset::ALL[seed as usize % ObjectPreset::ALL.len()];
    let config = SimConfig::with_preset(preset);
    let mut ctrl = WobblyController::new(config.clone(), seed);
    let mut world = spawn(&config, seed).unwrap();
    let p0 = world.pinned();
    let half = config.window_length / 2.0;
    let mut stats = SweepStats::default();
    let mut prints = vec![world.fingerprint()];
    while world.status == Status::Running && stats.steps < budget {
        let action = ctrl.act(&world, None).unwrap();
        let next = step(&world, &action, &config).unwrap();
        stats.steps += 1;
        let pin = next.pinned();
        if pin.x.to_bits() != p0.x.to_bits() || pin.y.to_bits() != p0.y.to_bits() {
            stats.pin_violations += 1;
        }
        stats.max_strain = stats.max_strain.max(next.rope.max_strain());
        let contact = next.gripper.pose.transform_point(tracebench::geom::Vec2::new(0.0, next.grasp.offset));
        let left = next.grasp.offset.abs() > half || (contact - p0).norm() >= config.length;
        if left != (next.status == Status::Dropped) {
            stats.drop_mismatches += 1;
        }
        if next.status == Status::Dropped {
            stats.drops += 1;
        }
        if next.status == Status::Running {
            match contact_point(&next) {
                Some((_, p)) if (p - contact).norm() < 1e-6 => {}
                _ => stats.contact_mismatches += 1,
            }
        }
        prints.push(next.fingerprint());
        world = next;
    }
    (stats, prints)
}

/// Seeded disturbance rollouts checking pin, strain, determinism and drop rules.
pub fn simulator_sweep(seeds: std::ops::Range<u64>, budget: usize) -> SweepStats {
    use rayon::prelude::*;
    let parts: Vec<SweepStats> = seeds
        .into_par_iter()
        .map(|seed| {
            let (mut a, pa) = sweep_once(seed, budget);
            let (_, pb) = sweep_once(seed, budget);
            if pa != pb {
                a.nondeterministic += 1;
            }
            a
        })
        .collect();
    parts.into_iter().fold(SweepStats::default(), |mut acc, s| {
        acc.steps += s.steps;
        acc.pin_violations += s.pin_violations;
        acc.max_strain = acc.max_strain.max(s.max_strain);
        acc.nondeterministic += s.nondeterministic;
        acc.drop_mismatches += s.drop_mismatches;
        acc.contact_mismatches += s.contact_mismatches;
        acc.drops += s.drops;
        acc
    })
}
