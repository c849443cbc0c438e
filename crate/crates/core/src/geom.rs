//! Planar geometry helpers: points, SE(2) poses and polyline queries.

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Rigid planar transform (x, y in meters; theta in radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub const fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn from_position(p: Vec2, theta: f64) -> Self {
        Self::new(p.x, p.y, theta)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the local x axis.
    pub fn x_axis(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Unit vector along the local y axis.
    pub fn y_axis(&self) -> Vec2 {
        Vec2::new(-self.theta.sin(), self.theta.cos())
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Rotates a direction from this frame into the parent frame.
    pub fn transform_vector(&self, v: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// Maps a parent-frame point into this frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        let d = p - self.position();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn inverse_transform_vector(&self, v: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let p = self.transform_point(other.position());
        Pose2::new(p.x, p.y, wrap_angle(self.theta + other.theta))
    }

    pub fn inverse(&self) -> Pose2 {
        let p = self.inverse_transform_point(Vec2::zeros());
        Pose2::new(p.x, p.y, wrap_angle(-self.theta))
    }

    /// Homogeneous 3×3 matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0)
    }
}

/// Intersection of segments `a0→a1` and `b0→b1`.
///
/// Returns `(t, u)` with the hit at `a0 + t·(a1−a0) = b0 + u·(b1−b0)`, both in `[0, 1]`.
pub fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, f64)> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.perp(&s);
    if denom.abs() < 1e-15 {
        return None;
    }
    let qp = b0 - a0;
    let t = qp.perp(&s) / denom;
    let u = qp.perp(&r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Distance from `p` to the segment `a→b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Point at arc length `s` along a polyline with uniform segment length.
pub fn point_at_arc(points: &[Vec2], segment_length: f64, s: f64) -> Vec2 {
    let n = points.len();
    if n == 0 {
        return Vec2::zeros();
    }
    if s <= 0.0 {
        return points[0];
    }
    let idx = (s / segment_length).floor() as usize;
    if idx >= n - 1 {
        return points[n - 1];
    }
    let f = s / segment_length - idx as f64;
    points[idx] + (points[idx + 1] - points[idx]) * f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_angle_range() {
        assert!(close(wrap_angle(3.0 * PI), PI, 1e-12));
        assert!(close(wrap_angle(-PI), PI, 1e-12));
        assert!(close(wrap_angle(0.5), 0.5, 1e-15));
        assert!(close(wrap_angle(-0.5 - 4.0 * PI), -0.5, 1e-12));
    }

    #[test]
    fn quarter_turn_transform() {
        let pose = Pose2::new(1.0, 2.0, PI / 2.0);
        let p = pose.transform_point(Vec2::new(0.1, 0.0));
        assert!(close(p.x, 1.0, 1e-12) && close(p.y, 2.1, 1e-12));
        let back = pose.inverse_transform_point(p);
        assert!(close(back.x, 0.1, 1e-12) && close(back.y, 0.0, 1e-12));
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Pose2::new(0.3, -0.2, 0.7);
        let b = Pose2::new(-1.1, 0.4, -2.1);
        let m = a.matrix() * b.matrix();
        let c = a.compose(&b).matrix();
        assert!((m - c).abs().max() < 1e-12);
        let id = a.compose(&a.inverse());
        assert!(id.position().norm() < 1e-12 && id.theta.abs() < 1e-12);
    }

    #[test]
    fn crossing_segments() {
        let hit = segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.3, -1.0),
            Vec2::new(0.3, 1.0),
        )
        .unwrap();
        assert!(close(hit.0, 0.3, 1e-12) && close(hit.1, 0.5, 1e-12));
        assert!(segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0)
        )
        .is_none());
    }

    #[test]
    fn arc_point_interpolates() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)];
        let p = point_at_arc(&pts, 1.0, 1.25);
        assert!(close(p.x, 1.0, 1e-12) && close(p.y, 0.25, 1e-12));
        assert_eq!(point_at_arc(&pts, 1.0, 5.0), pts[2]);
    }
}
