use std::f64::consts::PI;

use nalgebra::Vector3;
use proptest::prelude::*;

use tracebench::eval::{classify_outcome, wilson_bounds, Outcome, Trajectory, Z95};
use tracebench::geom::{wrap_angle, Pose2, Vec2};
use tracebench::labeling::{center_weight, completion_index, weight_at, WeightNormalizer, MISSING_CONTACT_WEIGHT};
use tracebench::policy::data::{absolute_action, relative_action};
use tracebench::policy::Photometric;
use tracebench::sim::{clamp_action, spawn, GripperAction, SimConfig, Status};
use tracebench::tactile::{gripper_to_pixel, gripper_to_world, pixel_to_gripper, world_to_gripper, FrameSpec, TactileFrame};

fn frame(h: usize, w: usize, p2m: f32) -> TactileFrame {
    TactileFrame::blank(
        &FrameSpec {
            height: h,
            width: w,
            p2m,
        },
        0,
    )
}

fn status() -> impl Strategy<Value = Status> {
    prop_oneof![
        Just(Status::Running),
        Just(Status::Dropped),
        Just(Status::Collided),
        Just(Status::Done)
    ]
}

proptest! {
    #[test]
    fn wilson_interval_brackets_the_rate(n in 1u64..500, frac in 0.0f64..=1.0) {
        let k = (frac * n as f64).round() as u64;
        let (lo, hi) = wilson_bounds(k, n, Z95).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        let (mlo, mhi) = wilson_bounds(n - k, n, Z95).unwrap();
        prop_assert!((lo - (1.0 - mhi)).abs() < 1e-12 && (hi - (1.0 - mlo)).abs() < 1e-12);
        if k < n {
            let (lo2, hi2) = wilson_bounds(k + 1, n, Z95).unwrap();
            prop_assert!(lo2 >= lo && hi2 >= hi);
        }
    }

    #[test]
    fn center_weight_is_a_fraction(u in -50.0f64..100.0, v in -50.0f64..100.0, half in 1usize..40) {
        let f = frame(2 * half, 2 * half, 2000.0);
        for n in [WeightNormalizer::HalfDiagonal, WeightNormalizer::HalfWidth] {
            let w = weight_at(Vec2::new(u, v), &f, n);
            prop_assert!(w > 0.0 && w <= 1.0);
        }
        prop_assert_eq!(weight_at(f.center(), &f, WeightNormalizer::HalfDiagonal), 1.0);
        prop_assert_eq!(center_weight(None, &f, WeightNormalizer::HalfWidth), MISSING_CONTACT_WEIGHT);
    }

    #[test]
    fn completion_index_is_clamped(
        p in prop::array::uniform2(-1.0f64..1.0),
        a in prop::array::uniform2(-1.0f64..1.0),
        b in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let (p, a, b) = (Vec2::from(p), Vec2::from(a), Vec2::from(b));
        match completion_index(p, a, b) {
            Ok(i) => prop_assert!((0.0..=1.0).contains(&i)),
            Err(_) => prop_assert_eq!(a, b),
        }
        if a != b {
            prop_assert_eq!(completion_index(a, a, b).unwrap(), 0.0);
            prop_assert_eq!(completion_index(b, a, b).unwrap(), 1.0);
        }
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -1e4f64..1e4) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn frame_changes_invert(
        u in 0.0f64..64.0,
        v in 0.0f64..64.0,
        p2m in 100.0f32..5000.0,
        pose in (-1.0f64..1.0, -1.0f64..1.0, -PI..PI),
    ) {
        let f = frame(32, 48, p2m);
        let pose = Pose2::new(pose.0, pose.1, pose.2);
        let g = pixel_to_gripper(Vec2::new(u, v), &f);
        let back = gripper_to_pixel(&g, &f);
        prop_assert!((back - Vec2::new(u, v)).norm() < 1e-9);
        let w = gripper_to_world(&g, &pose);
        prop_assert!((world_to_gripper(&w, &pose) - g).norm() < 1e-12);
        let through = pose.compose(&pose.inverse()).transform_point(Vec2::new(w.x, w.y));
        prop_assert!((through - Vec2::new(w.x, w.y)).norm() < 1e-12);
        prop_assert_eq!(w.z, 0.0);
        let lifted = gripper_to_world(&Vector3::new(g.x, g.y, 0.25), &pose);
        prop_assert_eq!(lifted.z, 0.25);
    }

    #[test]
    fn clamped_commands_respect_the_rate_limits(
        seed in 0u64..50,
        target in (-2.0f64..2.0, -2.0f64..2.0, -10.0f64..10.0, -1.0f64..1.0),
    ) {
        let config = SimConfig::default();
        let world = spawn(&config, seed).unwrap();
        let action = GripperAction {
            target_pose: Pose2::new(target.0, target.1, target.2),
            target_aperture: target.3,
        };
        let c = clamp_action(&world, &action, &config);
        let cur = world.gripper.pose;
        let moved = (c.target_pose.position() - cur.position()).norm();
        prop_assert!(moved <= config.max_speed * config.dt * (1.0 + 1e-12));
        let turned = wrap_angle(c.target_pose.theta - cur.theta).abs();
        prop_assert!(turned <= config.max_angular_speed * config.dt + 1e-12);
        prop_assert!((c.target_aperture - world.gripper.aperture).abs() <= config.max_aperture_speed * config.dt + 1e-12);
        prop_assert!(c.target_aperture >= 0.0 && c.target_aperture <= config.aperture_max);
        // Clamping is idempotent.
        let again = clamp_action(&world, &c, &config);
        prop_assert!((again.target_pose.position() - c.target_pose.position()).norm() < 1e-15);
        prop_assert_eq!(again.target_aperture, c.target_aperture);
    }

    #[test]
    fn relative_actions_invert(
        action in prop::array::uniform4(-1.0f32..1.0),
        kin in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let abs = absolute_action(&relative_action(&action, &kin), &kin);
        for i in [0, 1, 3] {
            prop_assert!((abs[i] - action[i] as f64).abs() < 1e-12);
        }
        prop_assert!(wrap_angle(abs[2] - action[2] as f64).abs() < 1e-12);
    }

    #[test]
    fn photometric_tables_are_monotone(
        pixels in prop::collection::vec(any::<u8>(), 1..64),
        b in 0.8f64..=1.2,
        c in 0.8f64..=1.25,
        g in 0.8f64..=1.25,
    ) {
        let t = Photometric { brightness: b, contrast: c, gamma: g }.table(&pixels);
        prop_assert!(t.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(t.windows(2).all(|w| w[0] <= w[1]));
        let id = Photometric::IDENTITY.table(&pixels);
        for (i, x) in id.iter().enumerate() {
            prop_assert!((x - i as f64 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tactile_records_round_trip(half_h in 1usize..20, half_w in 1usize..20, p2m in 1.0f32..1e4, seed in any::<u64>()) {
        let mut f = frame(2 * half_h, 2 * half_w, p2m);
        for (i, p) in f.pixels.iter_mut().enumerate() {
            *p = (seed.wrapping_mul(i as u64 + 1) >> 13) as u8;
        }
        let mut bytes = f.to_bytes();
        bytes.extend_from_slice(b"next");
        let (back, used) = TactileFrame::read_from(&bytes, 0.0).unwrap();
        prop_assert_eq!(used, bytes.len() - 4);
        prop_assert_eq!(back, f.clone());
        prop_assert!(TactileFrame::read_from(&bytes[..used - 1], 0.0).is_err());
    }

    #[test]
    fn every_terminated_trajectory_gets_one_outcome(
        final_status in status(),
        budget_exhausted in any::<bool>(),
        grasping_at_end in any::<bool>(),
        reached_arc in 0.0f64..1.0,
        contact in prop::option::of(prop::array::uniform2(-1.0f64..1.0)),
    ) {
        let config = SimConfig::default();
        let traj = Trajectory {
            final_status,
            budget_exhausted,
            grasping_at_end,
            reached_arc,
            last_contact: contact.map(Vec2::from),
            p0: Vec2::zeros(),
            steps: 10,
            duration: 1.0,
            final_stretch_time: None,
        };
        match classify_outcome(&traj, &config, 3) {
            Err(_) => prop_assert!(!traj.is_terminated()),
            Ok(t) => {
                prop_assert!(traj.is_terminated());
                prop_assert!(Outcome::ALL.contains(&t.outcome));
                prop_assert_eq!(t.success_time.is_some(), t.outcome == Outcome::Success);
                prop_assert_eq!(t.contact_seen, contact.is_some());
                prop_assert!(t.completion_ratio >= 0.0);
                if final_status == Status::Collided {
                    prop_assert_eq!(t.outcome, Outcome::RobotCollision);
                }
            }
        }
    }
}
