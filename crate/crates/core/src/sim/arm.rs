//! Planar serial-arm kinematics: forward kinematics, Jacobians and damped
//! least-squares inverse kinematics.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub joint_angles: [f64; 3],
    pub link_lengths: [f64; 3],
}

/// End pose of a planar chain with relative joint angles `q`.
pub fn forward_kinematics(base: Vec2, q: &[f64], links: &[f64]) -> Pose2 {
    let mut phi = 0.0;
    let mut p = base;
    for (qi, li) in q.iter().zip(links) {
        phi += qi;
        p += Vec2::new(phi.cos(), phi.sin()) * *li;
    }
    Pose2::new(p.x, p.y, wrap_angle(phi))
}

/// 2×n Jacobian of the end position with respect to the joint angles.
pub fn position_jacobian(q: &[f64], links: &[f64]) -> DMatrix<f64> {
    let n = q.len();
    let mut cum = vec![0.0; n];
    let mut phi = 0.0;
    for i in 0..n {
        phi += q[i];
        cum[i] = phi;
    }
    let mut j = DMatrix::zeros(2, n);
    for col in 0..n {
        for i in col..n {
            j[(0, col)] -= links[i] * cum[i].sin();
            j[(1, col)] += links[i] * cum[i].cos();
        }
    }
    j
}

/// Damped least-squares IK for the full planar pose of a three-link arm.
///
/// Starts from `q0`, so the returned solution is the one reached from the
/// current configuration. Returns `None` when the pose is not reached to
/// `1e-9` within the iteration budget.
pub fn solve_ik(base: Vec2, links: &[f64; 3], target: &Pose2, q0: [f64; 3]) -> Option<[f64; 3]> {
    const DAMPING: f64 = 1e-3;
    let mut q = Vector3::from(q0);
    for _ in 0..200 {
        let fk = forward_kinematics(base, q.as_slice(), links);
        let e = Vector3::new(
            target.x - fk.x,
            target.y - fk.y,
            wrap_angle(target.theta - fk.theta),
        );
        if e.fixed_rows::<2>(0).norm() < 1e-9 && e.z.abs() < 1e-9 {
            let q = [wrap_angle(q.x), wrap_angle(q.y), wrap_angle(q.z)];
            return Some(q);
        }
        let jp = position_jacobian(q.as_slice(), links);
        let j = Matrix3::new(
            jp[(0, 0)],
            jp[(0, 1)],
            jp[(0, 2)],
            jp[(1, 0)],
            jp[(1, 1)],
            jp[(1, 2)],
            1.0,
            1.0,
            1.0,
        );
        let jjt = j * j.transpose() + Matrix3::identity() * (DAMPING * DAMPING);
        let step = j.transpose() * jjt.try_inverse()? * e;
        q += step;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_differences() {
        let links = [0.3, 0.25, 0.1];
        let q = [0.4, -1.1, 0.7];
        let j = position_jacobian(&q, &links);
        let h = 1e-6;
        for c in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[c] += h;
            qm[c] -= h;
            let fp = forward_kinematics(Vec2::zeros(), &qp, &links).position();
            let fm = forward_kinematics(Vec2::zeros(), &qm, &links).position();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd.x - j[(0, c)]).abs() < 1e-8);
            assert!((fd.y - j[(1, c)]).abs() < 1e-8);
        }
    }

    #[test]
    fn ik_reaches_reachable_pose() {
        let base = Vec2::new(0.2, -0.4);
        let links = [0.35, 0.3, 0.1];
        let q_true = [1.2, -0.6, 0.3];
        let target = forward_kinematics(base, &q_true, &links);
        let q = solve_ik(base, &links, &target, [1.0, -0.5, 0.2]).unwrap();
        let fk = forward_kinematics(base, &q, &links);
        assert!((fk.position() - target.position()).norm() < 1e-9);
        assert!(wrap_angle(fk.theta - target.theta).abs() < 1e-9);
    }

    #[test]
    fn ik_fails_out_of_reach() {
        let base = Vec2::zeros();
        let target = Pose2::new(2.0, 0.0, 0.0);
        assert!(solve_ik(base, &[0.35, 0.3, 0.1], &target, [0.1, 0.1, 0.1]).is_none());
    }
}
