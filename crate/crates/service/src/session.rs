//! The authoritative teleoperation session: one world, stepped at a fixed
//! rate, with optional recording into a labeled dataset. No I/O besides the
//! dataset append; the server drives it.

use std::path::PathBuf;

use tracebench::config::RunConfig;
use tracebench::eval::{classify_outcome, Outcome, Trajectory};
use tracebench::expert::{manipulability, singularity_alert, w_max, ALERT_RATIO};
use tracebench::geom::{Pose2, Vec2};
use tracebench::labeling::{append_episode, frame_time, label_episode, Episode, EpisodeStep};
use tracebench::observe::{frame_noise_seed, observe};
use tracebench::sim::{
    clamp_action, contact_point, render_visual, spawn, step, GripperAction, ObjectPreset, Status, WorldState,
};
use tracebench::tactile::{extract_contact, gripper_to_world, pixel_to_gripper, render_tactile, ContactStyle, TactileFrame};
use tracebench::{Error, Result};

use crate::protocol::{ContactPayload, StatePayload, StreamMessage};

/// Polyline points sent per state message.
pub const MAX_POLYLINE: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub run: RunConfig,
    pub seed: u64,
    /// Simulation ticks per wall-clock second.
    pub tick_hz: f64,
    /// Broadcast state every this many ticks.
    pub broadcast_every: u64,
    /// Session dataset that finished recordings are appended to.
    pub dataset: PathBuf,
}

impl ServiceConfig {
    pub fn new(run: RunConfig, dataset: PathBuf) -> Self {
        Self {
            run,
            seed: 1,
            tick_hz: 30.0,
            broadcast_every: 2,
            dataset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if !(self.tick_hz > 0.0 && self.tick_hz <= 1000.0) {
            return Err(Error::InvalidConfig("tick rate must lie in (0, 1000] Hz".into()));
        }
        if self.broadcast_every == 0 {
            return Err(Error::InvalidConfig("broadcast interval must be at least 1 tick".into()));
        }
        Ok(())
    }
}

/// A move command, world frame, applied once at the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

struct Recorder {
    steps: Vec<EpisodeStep>,
    seed: u64,
    p0: Vec2,
    last_contact: Option<Vec2>,
    final_stretch_time: Option<f64>,
    start_time: f64,
}

/// Outcome of a stopped recording that was appended to the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedEpisode {
    pub episode_id: usize,
    pub dir: PathBuf,
    pub steps: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub stepped: bool,
    /// New alert state, when it changed this tick.
    pub alert_changed: Option<bool>,
    /// Simulator error; the session was reset to its seed.
    pub fault: Option<String>,
}

pub struct Session {
    config: ServiceConfig,
    world: WorldState,
    seed: u64,
    tick: u64,
    pending: Option<Move>,
    aperture: f64,
    recorder: Option<Recorder>,
    alert: bool,
    w_max: f64,
}

fn downsample(points: &[Vec2], max: usize) -> Vec<[f64; 2]> {
    if points.len() <= max {
        return points.iter().map(|p| [p.x, p.y]).collect();
    }
    (0..max)
        .map(|i| {
            let p = points[(i * (points.len() - 1) + (max - 1) / 2) / (max - 1)];
            [p.x, p.y]
        })
        .collect()
}

impl Session {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let world = spawn(&config.run.sim, config.seed)?;
        let w_max = w_max(&config.run.sim.arm.link_lengths);
        let mut s = Self {
            seed: config.seed,
            aperture: world.gripper.aperture,
            config,
            world,
            tick: 0,
            pending: None,
            recorder: None,
            alert: false,
            w_max,
        };
        s.alert = s.alert_now();
        Ok(s)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    fn manipulability(&self) -> f64 {
        manipulability(&self.world.arm.joint_angles, &self.world.arm.link_lengths)
    }

    fn alert_now(&self) -> bool {
        singularity_alert(self.manipulability(), self.w_max, ALERT_RATIO)
    }

    /// Respawns the world. A running recording is discarded.
    pub fn reset(&mut self, seed: u64, preset: Option<ObjectPreset>) -> Result<()> {
        let mut sim = self.config.run.sim.clone();
        if let Some(p) = preset {
            sim.preset = p;
        }
        let world = spawn(&sim, seed)?;
        self.config.run.sim = sim;
        self.seed = seed;
        self.aperture = world.gripper.aperture;
        self.world = world;
        self.pending = None;
        self.recorder = None;
        self.alert = self.alert_now();
        Ok(())
    }

    /// Queues a pose increment for the next tick; a later move replaces it.
    pub fn queue_move(&mut self, m: Move) {
        self.pending = Some(m);
    }

    pub fn set_aperture(&mut self, aperture: f64) {
        self.aperture = aperture;
    }

    /// The command the next tick would apply, rate-limited against the
    /// current gripper state.
    pub fn next_action(&self) -> GripperAction {
        let g = &self.world.gripper;
        let m = self.pending.unwrap_or(Move {
            dx: 0.0,
            dy: 0.0,
            dtheta: 0.0,
        });
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        let raw = GripperAction {
            target_pose: Pose2::new(
                g.pose.x + finite(m.dx),
                g.pose.y + finite(m.dy),
                g.pose.theta + finite(m.dtheta),
            ),
            target_aperture: if self.aperture.is_finite() { self.aperture } else { g.aperture },
        };
        clamp_action(&self.world, &raw, &self.config.run.sim)
    }

    pub fn start_recording(&mut self) -> Result<()> {
        if self.recorder.is_some() {
            return Err(Error::Precondition("already recording".into()));
        }
        self.recorder = Some(Recorder {
            steps: Vec::new(),
            seed: self.seed,
            p0: self.world.pinned(),
            last_contact: contact_point(&self.world).map(|(_, p)| p),
            final_stretch_time: None,
            start_time: self.world.time,
        });
        Ok(())
    }

    /// Ends the recording, labels it and appends it to the session dataset.
    /// Recordings shorter than two steps are discarded with an error.
    pub fn stop_recording(&mut self) -> Result<SavedEpisode> {
        let rec = self
            .recorder
            .take()
            .ok_or_else(|| Error::Precondition("not recording".into()))?;
        if rec.steps.len() < 2 {
            return Err(Error::Precondition(format!(
                "recording discarded: {} step(s), at least 2 needed",
                rec.steps.len()
            )));
        }
        let sim = &self.config.run.sim;
        let traj = Trajectory {
            final_status: self.world.status,
            budget_exhausted: self.world.status == Status::Running,
            grasping_at_end: self.world.gripper.grasping,
            reached_arc: self.world.grasp.arc,
            last_contact: rec.last_contact,
            p0: rec.p0,
            steps: rec.steps.len(),
            duration: self.world.time - rec.start_time,
            final_stretch_time: rec.final_stretch_time.map(|t| t - rec.start_time),
        };
        let outcome = classify_outcome(&traj, sim, rec.seed)?.outcome;
        let steps = rec.steps.len();
        let episode = Episode {
            steps: rec.steps,
            p0: [rec.p0.x, rec.p0.y],
            rate_hz: 1.0 / sim.dt,
            preset: sim.preset,
            seed: rec.seed,
            visual_resolution: self.config.run.sensors.visual_resolution,
        };
        let labeled = label_episode(&episode, &self.config.run.extraction, self.config.run.labeling.normalizer)?;
        let config = serde_json::to_value(&self.config.run)?;
        let dir = append_episode(&self.config.dataset, &labeled, &config)?;
        let episode_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.trim_start_matches("ep_").parse().ok())
            .unwrap_or(0);
        Ok(SavedEpisode {
            episode_id,
            dir,
            steps,
            outcome,
        })
    }

    /// Advances one tick: applies the pending move, records, steps the world.
    /// A finished world is held still until reset.
    pub fn tick(&mut self) -> TickReport {
        self.tick += 1;
        let mut report = TickReport::default();
        if self.world.status != Status::Running {
            self.pending = None;
            return report;
        }
        let action = self.next_action();
        self.pending = None;
        if let Err(e) = self.advance(&action) {
            report.fault = Some(e.to_string());
            let (seed, preset) = (self.seed, self.config.run.sim.preset);
            if let Err(e) = self.reset(seed, Some(preset)) {
                report.fault = Some(format!("{}; reset failed: {e}", report.fault.unwrap_or_default()));
            }
            return report;
        }
        report.stepped = true;
        let alert = self.alert_now();
        if alert != self.alert {
            self.alert = alert;
            report.alert_changed = Some(alert);
        }
        report
    }

    fn advance(&mut self, action: &GripperAction) -> Result<()> {
        let sim = &self.config.run.sim;
        if let Some(rec) = self.recorder.as_mut() {
            let t = rec.steps.len();
            let obs = observe(
                &self.world,
                sim,
                &self.config.run.sensors,
                frame_noise_seed(rec.seed, t as u64),
                frame_time(t, 1.0 / sim.dt),
            )?;
            let a = action.to_array();
            rec.steps.push(EpisodeStep {
                obs,
                action: [a[0] as f32, a[1] as f32, a[2] as f32, a[3] as f32],
            });
        }
        self.world = step(&self.world, action, sim)?;
        if let Some(rec) = self.recorder.as_mut() {
            if let Some((s, p)) = contact_point(&self.world) {
                rec.last_contact = Some(p);
                if rec.final_stretch_time.is_none() && s >= sim.stop_fraction * sim.length {
                    rec.final_stretch_time = Some(self.world.time);
                }
            }
        }
        Ok(())
    }

    /// Current tactile image, with the noise seeded by seed and step count.
    pub fn tactile(&self) -> TactileFrame {
        let sim = &self.config.run.sim;
        let mut frame = render_tactile(
            &self.world,
            &self.config.run.sensors.frame_spec(),
            &ContactStyle::from(sim.preset_params()),
            frame_noise_seed(self.seed, self.world.steps),
        );
        frame.timestamp = self.world.time;
        frame
    }

    /// Projection of the world onto the wire state.
    pub fn state(&self) -> StatePayload {
        let sim = &self.config.run.sim;
        let g = &self.world.gripper;
        let frame = self.tactile();
        let contact = extract_contact(&frame, &self.config.run.extraction).map(|est| {
            let w = gripper_to_world(&pixel_to_gripper(est.p_tac, &frame), &g.pose);
            ContactPayload {
                u: est.p_tac.x,
                v: est.p_tac.y,
                world: [w.x, w.y],
            }
        });
        let p0 = self.world.pinned();
        let completion = contact
            .as_ref()
            .map_or(0.0, |c| (Vec2::new(c.world[0], c.world[1]) - p0).norm() / sim.length);
        StatePayload {
            tick: self.tick,
            status: self.world.status.to_string(),
            preset: sim.preset,
            seed: self.seed,
            pose: [g.pose.x, g.pose.y, g.pose.theta],
            aperture: g.aperture,
            grasping: g.grasping,
            rope: downsample(&self.world.rope.particles, MAX_POLYLINE),
            pinned: [p0.x, p0.y],
            contact,
            completion,
            manipulability: self.manipulability(),
            w_max: self.w_max,
            alert: self.alert,
            recording: self.recorder.is_some(),
            velocity_limit: sim.max_speed,
        }
    }

    /// State, tactile and visual frames (sequence numbers left at zero).
    pub fn snapshot(&self) -> Result<Vec<(StreamMessage, Option<Vec<u8>>)>> {
        let time = self.world.time;
        let tactile = self.tactile();
        let res = self.config.run.sensors.visual_resolution;
        let visual = render_visual(&self.world, &self.config.run.sim.workspace, res)?;
        Ok(vec![
            (
                StreamMessage::State {
                    seq: 0,
                    time,
                    state: self.state(),
                },
                None,
            ),
            (
                StreamMessage::Tactile {
                    seq: 0,
                    time,
                    width: tactile.width,
                    height: tactile.height,
                    bytes: tactile.pixels.len(),
                },
                Some(tactile.pixels),
            ),
            (
                StreamMessage::Visual {
                    seq: 0,
                    time,
                    width: visual.width,
                    height: visual.height,
                    bytes: visual.pixels.len(),
                },
                Some(visual.pixels),
            ),
        ])
    }

    pub fn alert_message(&self) -> StreamMessage {
        StreamMessage::Alert {
            seq: 0,
            time: self.world.time,
            active: self.alert,
            manipulability: self.manipulability(),
            w_max: self.w_max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tracebench::expert::expert_action;

    fn session(dir: &std::path::Path) -> Session {
        Session::new(ServiceConfig::new(RunConfig::default(), dir.join("data"))).unwrap()
    }

    #[test]
    fn reset_matches_spawn() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        s.queue_move(Move {
            dx: 0.01,
            dy: 0.0,
            dtheta: 0.0,
        });
        s.tick();
        s.reset(7, None).unwrap();
        let fresh = spawn(&RunConfig::default().sim, 7).unwrap();
        assert_eq!(s.world(), &fresh);
        assert_eq!(s.state().rope.len(), fresh.rope.len());
    }

    #[test]
    fn moves_are_clamped_and_used_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let start = s.world().gripper.pose;
        s.queue_move(Move {
            dx: 1.0,
            dy: 0.0,
            dtheta: 0.0,
        });
        let a = s.next_action();
        let limit = s.config().run.sim.max_speed * s.config().run.sim.dt;
        assert!((a.target_pose.position() - start.position()).norm() <= limit + 1e-12);
        s.tick();
        let hold = s.next_action();
        assert_eq!(hold.target_pose.position(), s.world().gripper.pose.position());
    }

    #[test]
    fn short_recordings_are_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        s.start_recording().unwrap();
        s.tick();
        assert!(s.stop_recording().is_err());
        assert!(!dir.path().join("data").exists());
        assert!(s.stop_recording().is_err());
    }

    #[test]
    fn expert_recording_is_saved_as_success() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        let gains = s.config().run.expert;
        let sim = s.config().run.sim.clone();
        s.start_recording().unwrap();
        while s.world().status == Status::Running && s.tick_count() < 2000 {
            let a = expert_action(s.world(), &gains, &sim);
            let p = s.world().gripper.pose;
            s.queue_move(Move {
                dx: a.target_pose.x - p.x,
                dy: a.target_pose.y - p.y,
                dtheta: a.target_pose.theta - p.theta,
            });
            s.set_aperture(a.target_aperture);
            assert!(s.tick().fault.is_none());
        }
        let saved = s.stop_recording().unwrap();
        assert_eq!(saved.outcome, Outcome::Success);
        assert_eq!(saved.episode_id, 0);
        let data = tracebench::labeling::read_dataset(&dir.path().join("data")).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].len(), saved.steps);
    }

    #[test]
    fn snapshots_are_stable_and_survive_the_codec() {
        let dir = tempfile::tempdir().unwrap();
        let s = session(dir.path());
        let a = s.snapshot().unwrap();
        assert_eq!(a, s.snapshot().unwrap());
        for (msg, attachment) in a {
            let bytes = crate::protocol::encode(&msg, attachment.as_deref()).unwrap();
            let frame = crate::protocol::read_frame(&mut &bytes[..]).unwrap();
            assert_eq!(serde_json::from_value::<StreamMessage>(frame.json).unwrap(), msg);
            assert_eq!(frame.attachment, attachment);
        }
    }

    #[test]
    fn alert_flag_tracks_manipulability() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path());
        for i in 0..60 {
            s.queue_move(Move {
                dx: 0.02,
                dy: if i % 2 == 0 { 0.01 } else { -0.01 },
                dtheta: 0.05,
            });
            s.tick();
            let state = s.state();
            let q = &s.world().arm.joint_angles;
            let w = manipulability(q, &s.world().arm.link_lengths);
            assert_eq!(state.manipulability, w);
            assert_eq!(state.alert, singularity_alert(w, state.w_max, ALERT_RATIO));
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn no_command_exceeds_the_velocity_limit(
            dx in -1e3f64..1e3, dy in -1e3f64..1e3, dtheta in -1e3f64..1e3, ap in -1.0f64..1.0,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut s = session(dir.path());
            let sim = s.config().run.sim.clone();
            let before = s.world().gripper;
            s.queue_move(Move { dx, dy, dtheta });
            s.set_aperture(ap);
            s.tick();
            let after = s.world().gripper;
            let moved = (after.pose.position() - before.pose.position()).norm();
            proptest::prop_assert!(moved <= sim.max_speed * sim.dt + 1e-8);
            let turned = tracebench::geom::wrap_angle(after.pose.theta - before.pose.theta).abs();
            proptest::prop_assert!(turned <= sim.max_angular_speed * sim.dt + 1e-8);
            proptest::prop_assert!((after.aperture - before.aperture).abs() <= sim.max_aperture_speed * sim.dt + 1e-12);
        }
    }

    #[test]
    fn downsample_keeps_ends() {
        let pts: Vec<Vec2> = (0..101).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let d = downsample(&pts, 64);
        assert_eq!(d.len(), 64);
        assert_eq!(d[0], [0.0, 0.0]);
        assert_eq!(d[63], [100.0, 0.0]);
    }
}
