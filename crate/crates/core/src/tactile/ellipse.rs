//! Direct least-squares ellipse fitting (numerically stable Halíř–Flusser form).

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Vec2,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis angle from +u, in `(-π/2, π/2]`.
    pub angle: f64,
}

/// Fits an ellipse to at least five points. Returns `None` for degenerate
/// (e.g. collinear) input or when the best conic is not an ellipse.
pub fn fit_ellipse(points: &[Vec2]) -> Option<Ellipse> {
    if points.len() < 5 {
        return None;
    }
    // Normalize for conditioning.
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let spread = points.iter().map(|p| (p - mean).norm()).sum::<f64>() / n;
    if spread < 1e-12 {
        return None;
    }
    let scale = 1.0 / spread;
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let q = (p - mean) * scale;
        let d1 = Vector3::new(q.x * q.x, q.x * q.y, q.y * q.y);
        let d2 = Vector3::new(q.x, q.y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let t = -s3.try_inverse()? * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by the inverse of the ellipse constraint matrix.
    let mc = Matrix3::new(
        m[(2, 0)] / 2.0,
        m[(2, 1)] / 2.0,
        m[(2, 2)] / 2.0,
        -m[(1, 0)],
        -m[(1, 1)],
        -m[(1, 2)],
        m[(0, 0)] / 2.0,
        m[(0, 1)] / 2.0,
        m[(0, 2)] / 2.0,
    );
    let eig = mc.complex_eigenvalues();
    let mut best: Option<Vector3<f64>> = None;
    for lambda in eig.iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let Some(v) = null_vector(&(mc - Matrix3::identity() * lambda.re)) else {
            continue;
        };
        if 4.0 * v[0] * v[2] - v[1] * v[1] > 0.0 {
            best = Some(v);
            break;
        }
    }
    let a1 = best?;
    let a2 = t * a1;
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    let q = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let center_n = q.try_inverse()? * nalgebra::Vector2::new(-d, -e);
    let (x0, y0) = (center_n.x, center_n.y);
    let f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
    let sym = Matrix2::new(a, b / 2.0, b / 2.0, c).symmetric_eigen();
    let (l0, l1) = (sym.eigenvalues[0], sym.eigenvalues[1]);
    let r0 = -f0 / l0;
    let r1 = -f0 / l1;
    if !(r0 > 0.0 && r1 > 0.0 && r0.is_finite() && r1.is_finite()) {
        return None;
    }
    let (ax0, ax1) = (r0.sqrt() / scale, r1.sqrt() / scale);
    let (major, minor, dir) = if ax0 >= ax1 {
        (ax0, ax1, sym.eigenvectors.column(0).into_owned())
    } else {
        (ax1, ax0, sym.eigenvectors.column(1).into_owned())
    };
    let mut angle = dir.y.atan2(dir.x);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    } else if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    Some(Ellipse {
        center: mean + Vec2::new(x0, y0) / scale,
        semi_major: major,
        semi_minor: minor,
        angle,
    })
}

/// Unit null vector of a rank-2 3×3 matrix from the largest row cross product.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let v = cands
        .into_iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    let n = v.norm();
    (n > 1e-300).then(|| v / n)
}
