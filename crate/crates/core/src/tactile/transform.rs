//! Pixel ↔ gripper ↔ world frame changes for tactile contacts.

use nalgebra::Vector3;

use super::frame::TactileFrame;
use crate::geom::{Pose2, Vec2};

/// Contact pixel to gripper-frame point: `((u − u_c)/p2m, (v − v_c)/p2m, 0)`.
pub fn pixel_to_gripper(p_tac: Vec2, frame: &TactileFrame) -> Vector3<f64> {
    let c = frame.center();
    let p2m = frame.p2m as f64;
    Vector3::new((p_tac.x - c.x) / p2m, (p_tac.y - c.y) / p2m, 0.0)
}

pub fn gripper_to_pixel(p: &Vector3<f64>, frame: &TactileFrame) -> Vec2 {
    let c = frame.center();
    let p2m = frame.p2m as f64;
    Vec2::new(c.x + p.x * p2m, c.y + p.y * p2m)
}

/// Applies the gripper pose; z passes through unchanged.
pub fn gripper_to_world(p: &Vector3<f64>, pose: &Pose2) -> Vector3<f64> {
    let w = pose.transform_point(Vec2::new(p.x, p.y));
    Vector3::new(w.x, w.y, p.z)
}

pub fn world_to_gripper(p: &Vector3<f64>, pose: &Pose2) -> Vector3<f64> {
    let g = pose.inverse_transform_point(Vec2::new(p.x, p.y));
    Vector3::new(g.x, g.y, p.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tactile::frame::FrameSpec;

    #[test]
    fn center_maps_to_origin() {
        let f = TactileFrame::blank(&FrameSpec::default(), 0);
        assert_eq!(pixel_to_gripper(f.center(), &f), Vector3::zeros());
    }

    #[test]
    fn scale_arithmetic() {
        let f = TactileFrame::blank(
            &FrameSpec {
                height: 256,
                width: 256,
                p2m: 2000.0,
            },
            0,
        );
        let p = pixel_to_gripper(Vec2::new(228.0, 78.0), &f);
        assert_eq!(p, Vector3::new(0.05, -0.025, 0.0));
    }

    #[test]
    fn identity_pose_is_noop() {
        let p = Vector3::new(0.01, -0.02, 0.0);
        assert_eq!(gripper_to_world(&p, &Pose2::identity()), p);
    }
}
