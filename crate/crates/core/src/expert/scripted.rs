//! Scripted pursuit expert and demonstration recording.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::outcome::{classify_outcome, Outcome};
use crate::eval::rollout::{run_rollout, Controller};
use crate::geom::{Pose2, Vec2};
use crate::labeling::{Episode, Observation};
use crate::observe::SensorConfig;
use crate::sim::{contact_point, GripperAction, SimConfig, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertGains {
    /// Pursuit lookahead along the curve (m).
    pub lookahead: f64,
    /// Contact-centering gain (1/s).
    pub centering_gain: f64,
    /// Tracing speed (m/s), at most the simulator's limit.
    pub speed: f64,
    pub stop_fraction: f64,
    /// Standard deviation (m) of the seeded position jitter added to each action.
    pub jitter: f64,
}

impl Default for ExpertGains {
    fn default() -> Self {
        Self {
            lookahead: 0.02,
            centering_gain: 5.0,
            speed: 0.15,
            stop_fraction: 0.95,
            jitter: 0.001,
        }
    }
}

impl ExpertGains {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lookahead > 0.0
            && self.centering_gain > 0.0
            && self.speed > 0.0
            && self.speed <= 0.4
            && self.stop_fraction > 0.9
            && self.stop_fraction <= 1.0
            && self.jitter >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("expert gains out of range".into()))
        }
    }
}

/// Pursuit target before rate limiting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitTarget {
    /// Point on the curve `lookahead` ahead of the contact.
    pub curve_point: Vec2,
    pub heading: f64,
    /// Offset along the target's y axis applied to recenter the contact (m).
    pub lateral: f64,
    /// Whether the expert is holding (past the stop fraction).
    pub hold: bool,
}

impl PursuitTarget {
    pub fn pose(&self) -> Pose2 {
        let frame = Pose2::from_position(self.curve_point, self.heading);
        Pose2::from_position(frame.transform_point(Vec2::new(0.0, self.lateral)), self.heading)
    }
}

/// The expert's unclamped target, or `None` without a contact.
pub fn pursuit_target(world: &WorldState, gains: &ExpertGains, config: &SimConfig) -> Option<PursuitTarget> {
    let (s, p) = contact_point(world)?;
    let pose = world.gripper.pose;
    if s >= gains.stop_fraction * config.length {
        return Some(PursuitTarget {
            curve_point: pose.position(),
            heading: pose.theta,
            lateral: 0.0,
            hold: true,
        });
    }
    let p0 = world.pinned();
    let dir = p - p0;
    let u = if dir.norm() > 1e-9 { dir.normalize() } else { pose.x_axis() };
    // The traced part is a straight line from the pin, so its continuation is the pursuit point.
    let curve_point = p0 + u * (s + gains.lookahead);
    let offset = pose.inverse_transform_point(p).y;
    Some(PursuitTarget {
        curve_point,
        heading: u.y.atan2(u.x),
        lateral: -gains.centering_gain * offset * config.dt,
        hold: false,
    })
}

/// Deterministic expert command (no jitter).
pub fn expert_action(world: &WorldState, gains: &ExpertGains, config: &SimConfig) -> GripperAction {
    let Some(target) = pursuit_target(world, gains, config) else {
        return GripperAction::hold(world);
    };
    if target.hold {
        return GripperAction::hold(world);
    }
    let pose = world.gripper.pose;
    let goal = target.pose();
    let mut delta = goal.position() - pose.position();
    let max_step = gains.speed * config.dt;
    if delta.norm() > max_step {
        delta *= max_step / delta.norm();
    }
    let pos = pose.position() + delta;
    GripperAction {
        target_pose: Pose2::new(pos.x, pos.y, goal.theta),
        target_aperture: config.nominal_aperture(),
    }
}

/// The expert as a rollout controller, with seeded jitter on moving actions.
pub struct ExpertController {
    pub gains: ExpertGains,
    pub config: SimConfig,
    rng: ChaCha8Rng,
}

impl ExpertController {
    pub fn new(gains: ExpertGains, config: SimConfig, seed: u64) -> Self {
        Self {
            gains,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xE4_9E47),
        }
    }
}

impl Controller for ExpertController {
    fn uses_observations(&self) -> bool {
        false
    }

    fn act(&mut self, world: &WorldState, _obs: Option<&Observation>) -> Result<GripperAction> {
        let mut a = expert_action(world, &self.gains, &self.config);
        let moving = a.target_pose != world.gripper.pose;
        if moving && self.gains.jitter > 0.0 {
            let n = Normal::new(0.0, self.gains.jitter).expect("finite jitter");
            a.target_pose.x += n.sample(&mut self.rng);
            a.target_pose.y += n.sample(&mut self.rng);
        }
        Ok(a)
    }
}

/// Seed of the `attempt`-th rollout of a recording run.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(attempt as u64)
}

/// Generous step budget for expert rollouts: four times a straight full trace.
pub fn expert_step_cap(config: &SimConfig, gains: &ExpertGains) -> usize {
    (4.0 * config.length / (gains.speed * config.dt)).ceil() as usize + config.hold_steps
}

/// One recorded attempt: its seed, outcome and (for successes) the episode.
#[derive(Debug, Clone)]
pub struct DemoAttempt {
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub episode: Option<Episode>,
}

/// Runs seeded expert rollouts until `n` succeed, trying at most `5n` seeds.
///
/// Attempts run in parallel batches; results are taken in seed order, so the
/// output does not depend on thread count.
pub fn record_demos(
    n: usize,
    config: &SimConfig,
    sensors: &SensorConfig,
    gains: &ExpertGains,
    seed: u64,
) -> Result<(Vec<Episode>, Vec<DemoAttempt>)> {
    if n == 0 {
        return Err(Error::Precondition("number of demonstrations must be at least 1".into()));
    }
    config.validate()?;
    gains.validate()?;
    let cap = 5 * n;
    let budget = expert_step_cap(config, gains);
    let mut episodes = Vec::with_capacity(n);
    let mut attempts = Vec::new();
    let mut next = 0;
    while episodes.len() < n && next < cap {
        let batch = (n - episodes.len()).min(cap - next);
        let results: Vec<Result<DemoAttempt>> = (next..next + batch)
            .into_par_iter()
            .map(|i| {
                let s = attempt_seed(seed, i);
                let mut ctrl = ExpertController::new(*gains, config.clone(), s);
                let r = run_rollout(&mut ctrl, config, sensors, s, budget, true)?;
                let out = classify_outcome(&r.trajectory, config, s)?;
                Ok(DemoAttempt {
                    seed: s,
                    outcome: out.outcome,
                    steps: r.trajectory.steps,
                    episode: (out.outcome == Outcome::Success).then_some(r.episode).flatten(),
                })
            })
            .collect();
        next += batch;
        for r in results {
            let mut a = r?;
            if let Some(ep) = a.episode.take() {
                if episodes.len() < n {
                    episodes.push(ep);
                }
            }
            attempts.push(a);
        }
    }
    if episodes.len() < n {
        return Err(Error::DemoCapExhausted {
            preset: config.preset.to_string(),
            attempts: attempts.len(),
        });
    }
    Ok((episodes, attempts))
}

/// Mean number of steps the (jitter-free) expert needs to finish, over `runs` seeds.
pub fn expert_mean_steps(config: &SimConfig, gains: &ExpertGains, runs: usize, seed: u64) -> Result<f64> {
    let gains = ExpertGains { jitter: 0.0, ..*gains };
    let budget = expert_step_cap(config, &gains);
    let sensors = SensorConfig::default();
    let steps: Vec<usize> = (0..runs.max(1))
        .into_par_iter()
        .map(|i| {
            let s = attempt_seed(seed, i);
            let mut ctrl = ExpertController::new(gains, config.clone(), s);
            run_rollout(&mut ctrl, config, &sensors, s, budget, false).map(|r| r.trajectory.steps)
        })
        .collect::<Result<_>>()?;
    Ok(steps.iter().sum::<usize>() as f64 / steps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::taut_line;

    #[test]
    fn centered_straight_contact_advances_along_x() {
        let config = SimConfig::default();
        let world = taut_line(&config, 0.2).unwrap();
        let a = expert_action(&world, &ExpertGains::default(), &config);
        let d = a.target_pose.position() - world.gripper.pose.position();
        assert!(d.x > 0.0 && d.y.abs() < 1e-12);
        assert!(a.target_pose.theta.abs() < 1e-12);
    }

    #[test]
    fn lateral_command_opposes_offset() {
        let config = SimConfig::default();
        let mut world = taut_line(&config, 0.2).unwrap();
        // Shift the gripper so the contact sits 2 mm along its +y.
        world.gripper.pose.y -= 0.002;
        world.grasp.offset = 0.002;
        let gains = ExpertGains::default();
        let t = pursuit_target(&world, &gains, &config).unwrap();
        assert!((t.lateral + gains.centering_gain * 0.002 * config.dt).abs() < 1e-12);
    }

    #[test]
    fn holds_past_stop_fraction() {
        let config = SimConfig::default();
        let world = taut_line(&config, 0.96 * config.length).unwrap();
        let a = expert_action(&world, &ExpertGains::default(), &config);
        assert_eq!(a.target_pose, world.gripper.pose);
    }
}
