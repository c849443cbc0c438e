//! Closed-loop rollouts of a controller in the simulator.

use crate::error::Result;
use crate::labeling::{frame_time, Episode, EpisodeStep, Observation};
use crate::observe::{frame_noise_seed, observe, SensorConfig};
use crate::sim::{contact_point, spawn, step, GripperAction, SimConfig, Status, WorldState};

use super::outcome::Trajectory;

/// Anything that can drive the gripper one step at a time.
pub trait Controller {
    /// Whether `act` needs rendered observations (skipping them saves time).
    fn uses_observations(&self) -> bool {
        true
    }

    fn act(&mut self, world: &WorldState, obs: Option<&Observation>) -> Result<GripperAction>;
}

/// Result of one rollout; `episode` is present when recording was requested.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub episode: Option<Episode>,
    pub final_world: WorldState,
}

/// Runs from the seeded spawn until the world stops running or the budget is spent.
pub fn run_rollout<C: Controller + ?Sized>(
    controller: &mut C,
    config: &SimConfig,
    sensors: &SensorConfig,
    seed: u64,
    budget: usize,
    record: bool,
) -> Result<Rollout> {
    let world = spawn(config, seed)?;
    run_from(controller, world, config, sensors, seed, budget, record)
}

pub fn run_from<C: Controller + ?Sized>(
    controller: &mut C,
    mut world: WorldState,
    config: &SimConfig,
    sensors: &SensorConfig,
    seed: u64,
    budget: usize,
    record: bool,
) -> Result<Rollout> {
    let rate_hz = 1.0 / config.dt;
    let p0 = world.pinned();
    let mut steps = Vec::new();
    let mut last_contact = contact_point(&world).map(|(_, p)| p);
    let mut final_stretch_time = None;
    let stop_arc = config.stop_fraction * config.length;
    let mut taken = 0;
    while world.status == Status::Running && taken < budget {
        let obs = if record || controller.uses_observations() {
            Some(observe(
                &world,
                config,
                sensors,
                frame_noise_seed(seed, taken as u64),
                frame_time(taken, rate_hz),
            )?)
        } else {
            None
        };
        let action = controller.act(&world, obs.as_ref())?;
        if record {
            let a = action.to_array();
            steps.push(EpisodeStep {
                obs: obs.expect("observation rendered while recording"),
                action: [a[0] as f32, a[1] as f32, a[2] as f32, a[3] as f32],
            });
        }
        world = step(&world, &action, config)?;
        taken += 1;
        if let Some((s, p)) = contact_point(&world) {
            last_contact = Some(p);
            if final_stretch_time.is_none() && s >= stop_arc {
                final_stretch_time = Some(world.time);
            }
        }
    }
    let trajectory = Trajectory {
        final_status: world.status,
        budget_exhausted: world.status == Status::Running,
        grasping_at_end: world.gripper.grasping,
        reached_arc: world.grasp.arc,
        last_contact,
        p0,
        steps: taken,
        duration: world.time,
        final_stretch_time,
    };
    let episode = record.then(|| Episode {
        steps,
        p0: [p0.x, p0.y],
        rate_hz,
        preset: config.preset,
        seed,
        visual_resolution: sensors.visual_resolution,
    });
    Ok(Rollout {
        trajectory,
        episode,
        final_world: world,
    })
}
