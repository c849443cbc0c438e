use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::arm::{forward_kinematics, solve_ik, ArmState};
use super::config::{Layout, SimConfig};
use super::rope::RopeState;
use crate::error::{Error, Result};
use crate::geom::{segment_intersection, wrap_angle, Pose2, Vec2};

const SPAWN_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Dropped,
    Collided,
    Done,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Running => "running",
            Status::Dropped => "dropped",
            Status::Collided => "collided",
            Status::Done => "done",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// Fingertip frame: x along the traced curve, fingers along y.
    pub pose: Pose2,
    pub aperture: f64,
    pub grasping: bool,
    /// (length along finger, width across finger), centered on the frame origin.
    pub sensor_window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperAction {
    pub target_pose: Pose2,
    pub target_aperture: f64,
}

impl GripperAction {
    pub fn hold(world: &WorldState) -> Self {
        Self {
            target_pose: world.gripper.pose,
            target_aperture: world.gripper.aperture,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [
            self.target_pose.x,
            self.target_pose.y,
            self.target_pose.theta,
            self.target_aperture,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            target_pose: Pose2::new(a[0], a[1], a[2]),
            target_aperture: a[3],
        }
    }
}

/// Bookkeeping for the held object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspState {
    /// Arc length from the pinned end to the contact; never decreases.
    pub arc: f64,
    /// Contact offset along the finger (gripper y), in meters.
    pub offset: f64,
    /// Tension on the pinned side during the last step (N).
    pub tension: f64,
    /// Drag of the untraced tail during the last step (N).
    pub tail_tension: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub rope: RopeState,
    pub gripper: GripperState,
    pub arm: ArmState,
    pub grasp: GraspState,
    pub time: f64,
    pub steps: u64,
    pub status: Status,
    /// Consecutive steps spent past the stop fraction while grasping.
    pub hold_count: usize,
}

impl WorldState {
    pub fn pinned(&self) -> Vec2 {
        self.rope.pinned()
    }

    /// Little-endian dump of every numeric field, for bit-exact comparisons.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 * self.rope.len() + 256);
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for p in &self.rope.particles {
            put(p.x);
            put(p.y);
        }
        for v in [
            self.rope.rest_length,
            self.rope.friction_coeff,
            self.rope.compliance,
            self.rope.dangling_pull,
            self.gripper.pose.x,
            self.gripper.pose.y,
            self.gripper.pose.theta,
            self.gripper.aperture,
            self.gripper.sensor_window.0,
            self.gripper.sensor_window.1,
            self.arm.joint_angles[0],
            self.arm.joint_angles[1],
            self.arm.joint_angles[2],
            self.grasp.arc,
            self.grasp.offset,
            self.grasp.tension,
            self.grasp.tail_tension,
            self.time,
        ] {
            put(v);
        }
        out.extend_from_slice(&self.steps.to_le_bytes());
        out.extend_from_slice(&(self.hold_count as u64).to_le_bytes());
        out.push(self.gripper.grasping as u8);
        out.push(self.status as u8);
        out
    }
}

fn arm_base(config: &SimConfig) -> Vec2 {
    Vec2::new(config.arm.base_x, config.arm.base_y)
}

/// Solves the arm for `pose`, trying a few deterministic seeds.
fn initial_joints(config: &SimConfig, pose: &Pose2) -> Option<[f64; 3]> {
    let seeds = [
        [1.6, -1.2, 0.0],
        [0.8, 1.2, -1.0],
        [2.2, -2.0, 0.5],
        [0.3, 0.6, 0.0],
    ];
    seeds.iter().find_map(|q0| {
        let mut q0 = *q0;
        q0[2] = wrap_angle(pose.theta - q0[0] - q0[1]);
        solve_ik(arm_base(config), &config.arm.link_lengths, pose, q0)
    })
}

fn random_walk(config: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let n = config.n_particles;
    let r = config.rest_length();
    let heading0 = rng.random_range(-config.heading_spread..=config.heading_spread);
    let turn = Normal::new(0.0, config.walk_turn_sigma.max(1e-12)).expect("finite sigma");
    // The first segments through the grasp stay straight so the spawn grasp is well posed.
    let straight = (config.grasp_fraction * (n - 1) as f64).ceil() as usize + 1;
    let mut heading = heading0;
    let mut pts = Vec::with_capacity(n);
    pts.push(Vec2::zeros());
    for i in 1..n {
        if config.layout == Layout::Crumpled && i > straight {
            heading += turn.sample(rng);
        }
        let prev = pts[i - 1];
        pts.push(prev + Vec2::new(heading.cos(), heading.sin()) * r);
    }
    pts
}

/// Builds the seeded initial configuration.
pub fn spawn(config: &SimConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut particles = None;
    for _ in 0..SPAWN_RETRIES {
        let pts = random_walk(config, &mut rng);
        if pts.iter().all(|p| config.workspace.contains(*p)) {
            particles = Some(pts);
            break;
        }
    }
    let particles = particles.ok_or(Error::SpawnFailed {
        retries: SPAWN_RETRIES,
    })?;
    let s0 = config.grasp_fraction * config.length;
    let offset = if config.grasp_offset > 0.0 {
        rng.random_range(-config.grasp_offset..=config.grasp_offset)
    } else {
        0.0
    };
    build_world(config, particles, s0, offset)
}

/// A straight curve from the pinned origin along +x, grasped at arc length `s`
/// with the contact centered on the sensor.
pub fn taut_line(config: &SimConfig, s: f64) -> Result<WorldState> {
    config.validate()?;
    if !(s > 0.0 && s < config.length) {
        return Err(Error::Precondition(format!(
            "grasp arc length {s} outside (0, {})",
            config.length
        )));
    }
    let r = config.rest_length();
    let particles = (0..config.n_particles)
        .map(|i| Vec2::new(i as f64 * r, 0.0))
        .collect();
    build_world(config, particles, s, 0.0)
}

fn build_world(
    config: &SimConfig,
    particles: Vec<Vec2>,
    s0: f64,
    offset: f64,
) -> Result<WorldState> {
    let params = config.preset_params();
    let rope = RopeState {
        particles,
        rest_length: config.rest_length(),
        pinned_index: 0,
        friction_coeff: params.friction,
        compliance: params.compliance,
        dangling_pull: params.dangling_pull,
    };
    let m = rope.segment_index(s0);
    let tangent = (rope.particles[m + 1] - rope.particles[m]).normalize();
    let contact = crate::geom::point_at_arc(&rope.particles, rope.rest_length, s0);
    let theta = tangent.y.atan2(tangent.x);
    let y_axis = Vec2::new(-theta.sin(), theta.cos());
    let origin = contact - y_axis * offset;
    let pose = Pose2::new(origin.x, origin.y, theta);
    let q = initial_joints(config, &pose).ok_or_else(|| {
        Error::InvalidConfig("arm cannot reach the spawn grasp pose".to_string())
    })?;
    let fk = forward_kinematics(arm_base(config), &q, &config.arm.link_lengths);
    Ok(WorldState {
        rope,
        gripper: GripperState {
            pose: fk,
            aperture: config.nominal_aperture(),
            grasping: true,
            sensor_window: (config.window_length, config.window_width),
        },
        arm: ArmState {
            joint_angles: q,
            link_lengths: config.arm.link_lengths,
        },
        grasp: GraspState {
            arc: s0,
            offset,
            tension: 0.0,
            tail_tension: 0.0,
        },
        time: 0.0,
        steps: 0,
        status: Status::Running,
        hold_count: 0,
    })
}

/// Rate-limits a command against the current gripper state.
pub fn clamp_action(world: &WorldState, action: &GripperAction, config: &SimConfig) -> GripperAction {
    let cur = world.gripper.pose;
    let mut delta = action.target_pose.position() - cur.position();
    let max_step = config.max_speed * config.dt;
    let norm = delta.norm();
    if norm > max_step {
        delta *= max_step / norm;
    }
    let max_turn = config.max_angular_speed * config.dt;
    let dtheta = wrap_angle(action.target_pose.theta - cur.theta).clamp(-max_turn, max_turn);
    let max_open = config.max_aperture_speed * config.dt;
    let target_ap = action.target_aperture.clamp(0.0, config.aperture_max);
    let aperture = world.gripper.aperture + (target_ap - world.gripper.aperture).clamp(-max_open, max_open);
    let pos = cur.position() + delta;
    GripperAction {
        target_pose: Pose2::new(pos.x, pos.y, wrap_angle(cur.theta + dtheta)),
        target_aperture: aperture,
    }
}

/// Lateral (finger-axis) rope velocity under pad friction.
///
/// `pad_velocity` is the pad's velocity along the finger, `external` the net
/// non-friction force on the rope along the finger, `capacity` the friction
/// limit. Returns the rope's velocity along the finger.
pub fn lateral_rope_velocity(pad_velocity: f64, external: f64, capacity: f64, damping: f64) -> f64 {
    let stick_force = damping * pad_velocity - external;
    if stick_force.abs() <= capacity {
        pad_velocity
    } else {
        (external + capacity * stick_force.signum()) / damping
    }
}

/// Advances the world by one step.
pub fn step(world: &WorldState, action: &GripperAction, config: &SimConfig) -> Result<WorldState> {
    if world.status != Status::Running {
        return Err(Error::NotRunning(world.status.to_string()));
    }
    let dt = config.dt;
    let mut next = world.clone();
    let cmd = clamp_action(world, action, config);

    let base = arm_base(config);
    let old_pose = world.gripper.pose;
    if let Some(q) = solve_ik(base, &config.arm.link_lengths, &cmd.target_pose, world.arm.joint_angles) {
        next.arm.joint_angles = q;
        next.gripper.pose = forward_kinematics(base, &q, &config.arm.link_lengths);
    }
    next.gripper.aperture = cmd.target_aperture;
    next.time = world.time + dt;
    next.steps = world.steps + 1;

    if !world.gripper.grasping {
        next.status = Status::Dropped;
        return Ok(next);
    }

    let params = config.preset_params();
    let diameter = params.diameter;
    let pose = next.gripper.pose;
    if next.gripper.aperture >= diameter {
        next.gripper.grasping = false;
        next.status = Status::Dropped;
        return Ok(next);
    }
    let normal = config.grip_stiffness * ((diameter - next.gripper.aperture) / diameter).max(0.0);
    let capacity = world.rope.friction_coeff * normal;

    let p0 = world.pinned();
    let y_c = world.grasp.offset;
    let old_contact = old_pose.transform_point(Vec2::new(0.0, y_c));
    let y_axis = pose.y_axis();
    let pad_velocity = (pose.transform_point(Vec2::new(0.0, y_c)) - old_contact).dot(&y_axis) / dt;

    let to_pin = p0 - old_contact;
    let to_pin = if to_pin.norm() > 1e-12 { to_pin.normalize() } else { -pose.x_axis() };
    let m_old = world.rope.segment_index(world.grasp.arc);
    let tail_dir = if m_old + 1 < world.rope.len() {
        let d = world.rope.particles[m_old + 1] - old_contact;
        if d.norm() > 1e-12 {
            d.normalize()
        } else {
            pose.x_axis()
        }
    } else {
        pose.x_axis()
    };
    let external = world.rope.dangling_pull
        + world.grasp.tension * to_pin.dot(&y_axis)
        + world.grasp.tail_tension * tail_dir.dot(&y_axis);
    let rope_velocity = lateral_rope_velocity(pad_velocity, external, capacity, config.lateral_damping);
    let offset = y_c + (rope_velocity - pad_velocity) * dt;
    next.grasp.offset = offset;

    if offset.abs() > config.window_length / 2.0 {
        next.gripper.grasping = false;
        next.status = Status::Dropped;
        return Ok(next);
    }

    let contact = pose.transform_point(Vec2::new(0.0, offset));
    let reach = (contact - p0).norm();
    let s_old = world.grasp.arc;
    if reach >= config.length {
        // The free end slid out between the fingers.
        next.grasp.arc = config.length;
        next.rope.place_taut(config.length, contact);
        next.gripper.grasping = false;
        next.status = Status::Dropped;
        return Ok(next);
    }

    let remaining = (config.length - s_old.max(reach)) / config.length;
    if reach >= s_old {
        let pulling = reach > s_old + 1e-12;
        next.grasp.arc = reach;
        next.rope.place_taut(reach, contact);
        next.grasp.tail_tension = if pulling { config.tail_drag * remaining } else { 0.0 };
        next.grasp.tension = if pulling { capacity + next.grasp.tail_tension } else { 0.0 };
    } else {
        next.rope.place_slack(s_old, contact, config.solver_iterations);
        next.grasp.tension = 0.0;
        next.grasp.tail_tension = 0.0;
    }
    let m = next.rope.segment_index(next.grasp.arc);
    let alpha_tilde = next.rope.compliance / (dt * dt);
    next.rope.follow_tail(m + 2, alpha_tilde, config.solver_iterations);

    if next.grasp.tension > config.tension_limit
        || (pose.position() - p0).norm() < config.collision_radius
    {
        next.status = Status::Collided;
        return Ok(next);
    }

    if next.grasp.arc >= config.stop_fraction * config.length {
        next.hold_count += 1;
        if next.hold_count >= config.hold_steps {
            next.status = Status::Done;
        }
    } else {
        next.hold_count = 0;
    }
    Ok(next)
}

/// Ground-truth contact: where the rope crosses the finger segment, as
/// (arc length from the pinned end, world point). `None` when not grasping.
pub fn contact_point(world: &WorldState) -> Option<(f64, Vec2)> {
    if !world.gripper.grasping {
        return None;
    }
    let pose = world.gripper.pose;
    let half = world.gripper.sensor_window.0 / 2.0;
    let a = pose.transform_point(Vec2::new(0.0, -half));
    let b = pose.transform_point(Vec2::new(0.0, half));
    let r = world.rope.rest_length;
    let mut best: Option<(f64, Vec2)> = None;
    for (i, seg) in world.rope.particles.windows(2).enumerate() {
        if let Some((t, _)) = segment_intersection(seg[0], seg[1], a, b) {
            let s = (i as f64 + t) * r;
            let p = seg[0] + (seg[1] - seg[0]) * t;
            let closer = best.is_none_or(|(bs, _)| (s - world.grasp.arc).abs() < (bs - world.grasp.arc).abs());
            if closer {
                best = Some((s, p));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lateral_velocity_sticks_below_capacity() {
        assert_eq!(lateral_rope_velocity(0.01, 0.0, 3.0, 100.0), 0.01);
        let v = lateral_rope_velocity(0.4, 0.0, 3.0, 100.0);
        assert!((v - 0.03).abs() < 1e-15);
        let v = lateral_rope_velocity(0.0, 5.0, 3.0, 100.0);
        assert!((v - 0.02).abs() < 1e-15);
    }

    #[test]
    fn clamp_limits_translation() {
        let config = SimConfig::default();
        let world = taut_line(&config, 0.25).unwrap();
        let mut target = world.gripper.pose;
        target.x += 1.0;
        let cmd = clamp_action(
            &world,
            &GripperAction {
                target_pose: target,
                target_aperture: world.gripper.aperture,
            },
            &config,
        );
        let d = (cmd.target_pose.position() - world.gripper.pose.position()).norm();
        assert!((d - config.max_speed * config.dt).abs() < 1e-12);
    }

    #[test]
    fn spawn_is_deterministic() {
        let config = SimConfig::default();
        let a = spawn(&config, 7).unwrap();
        let b = spawn(&config, 7).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), spawn(&config, 8).unwrap().fingerprint());
    }

    #[test]
    fn spawn_grasps_near_pinned_end() {
        let config = SimConfig::default();
        let world = spawn(&config, 3).unwrap();
        let (s, _) = contact_point(&world).unwrap();
        assert!(s <= 0.05 * config.length);
        assert!((s - world.grasp.arc).abs() < 1e-9);
    }

    #[test]
    fn stepping_finished_world_fails() {
        let config = SimConfig::default();
        let mut world = taut_line(&config, 0.25).unwrap();
        world.status = Status::Done;
        let hold = GripperAction::hold(&world);
        assert!(matches!(step(&world, &hold, &config), Err(Error::NotRunning(_))));
    }

    #[test]
    fn opening_the_gripper_drops() {
        let config = SimConfig::default();
        let world = taut_line(&config, 0.25).unwrap();
        let mut action = GripperAction::hold(&world);
        action.target_aperture = config.aperture_max;
        let mut w = world;
        for _ in 0..10 {
            w = step(&w, &action, &config).unwrap();
            if w.status != Status::Running {
                break;
            }
        }
        assert_eq!(w.status, Status::Dropped);
        assert!(contact_point(&w).is_none());
    }
}
