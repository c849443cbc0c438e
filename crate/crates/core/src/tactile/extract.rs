//! Contact extraction: blur, binarize, connected components, contour, then
//! ellipse fit with a PCA fallback.

use serde::{Deserialize, Serialize};

use super::ellipse::fit_ellipse;
use super::frame::TactileFrame;
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionParams {
    pub binarize_threshold: u8,
    pub gaussian_sigma: f64,
    pub min_area: usize,
    pub ellipse_min_points: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            binarize_threshold: 60,
            gaussian_sigma: 1.0,
            min_area: 6,
            ellipse_min_points: 5,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.binarize_threshold == 0 || self.binarize_threshold == 255 {
            return Err(crate::Error::InvalidConfig(
                "binarize_threshold must lie in (0, 255)".into(),
            ));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(crate::Error::InvalidConfig("gaussian_sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    EllipseFit,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEstimate {
    /// Sub-pixel contact `(u, v)`; pixel `(i, j)` spans `[i, i+1) × [j, j+1)`.
    pub p_tac: Vec2,
    pub method: Method,
    /// Pixel count of the selected component.
    pub contact_area: usize,
    pub major_axis_angle: f64,
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(pixels: &[u8], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; width * height];
    for v in 0..height {
        for u in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let uu = clampi(u as i64 + k as i64 - radius, width);
                acc += w * pixels[v * width + uu] as f64;
            }
            tmp[v * width + u] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for v in 0..height {
        for u in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let vv = clampi(v as i64 + k as i64 - radius, height);
                acc += w * tmp[vv * width + u];
            }
            out[v * width + u] = acc;
        }
    }
    out
}

/// 8-connected components of the `true` pixels; each component lists linear indices.
pub fn connected_components(mask: &[bool], width: usize, height: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (u, v) = ((i % width) as i64, (i / width) as i64);
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (nu, nv) = (u + du, v + dv);
                    if nu < 0 || nv < 0 || nu >= width as i64 || nv >= height as i64 {
                        continue;
                    }
                    let j = nv as usize * width + nu as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Boundary pixels of a component: members with an in-image 4-neighbor outside it.
/// Pixels touching only the image edge are not boundary; the edge is a crop, not an outline.
pub fn contour_points(comp: &[usize], mask: &[bool], width: usize, height: usize) -> Vec<Vec2> {
    let mut pts = Vec::new();
    for &i in comp {
        let (u, v) = ((i % width) as i64, (i / width) as i64);
        let on_boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(du, dv)| {
            let (nu, nv) = (u + du, v + dv);
            nu >= 0
                && nv >= 0
                && nu < width as i64
                && nv < height as i64
                && !mask[nv as usize * width + nu as usize]
        });
        if on_boundary {
            pts.push(Vec2::new(u as f64 + 0.5, v as f64 + 0.5));
        }
    }
    pts
}

/// Centroid and principal-axis angle of a point set.
pub fn pca(points: &[Vec2]) -> (Vec2, f64) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    (mean, 0.5 * (2.0 * sxy).atan2(sxx - syy))
}

pub fn extract_contact(frame: &TactileFrame, params: &ExtractionParams) -> Option<ContactEstimate> {
    let (w, h) = (frame.width, frame.height);
    let blurred = gaussian_blur(&frame.pixels, w, h, params.gaussian_sigma);
    let threshold = params.binarize_threshold as f64;
    let mask: Vec<bool> = blurred.iter().map(|&b| b >= threshold).collect();
    let comps = connected_components(&mask, w, h);
    // Largest by area; ties keep the first in scan order.
    let comp = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    })?;
    if comp.len() < params.min_area.max(1) {
        return None;
    }
    let mut comp_mask = vec![false; mask.len()];
    comp.iter().for_each(|&i| comp_mask[i] = true);
    let mut contour = contour_points(comp, &comp_mask, w, h);
    if contour.is_empty() {
        // The component fills the frame; fall back to all its pixels.
        contour = comp
            .iter()
            .map(|&i| Vec2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5))
            .collect();
    }

    if contour.len() >= params.ellipse_min_points {
        if let Some(e) = fit_ellipse(&contour) {
            let (u0, u1, v0, v1) = comp.iter().fold(
                (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
                |(a, b, c, d), &i| {
                    let (u, v) = ((i % w) as f64, (i / w) as f64);
                    (a.min(u), b.max(u + 1.0), c.min(v), d.max(v + 1.0))
                },
            );
            let inside_box = e.center.x >= u0 && e.center.x <= u1 && e.center.y >= v0 && e.center.y <= v1;
            let inside_frame = e.center.x >= 0.0
                && e.center.x < w as f64
                && e.center.y >= 0.0
                && e.center.y < h as f64;
            let plausible = e.semi_major <= 2.0 * (w.max(h) as f64);
            if inside_box && inside_frame && plausible {
                return Some(ContactEstimate {
                    p_tac: e.center,
                    method: Method::EllipseFit,
                    contact_area: comp.len(),
                    major_axis_angle: e.angle,
                });
            }
        }
    }
    let (centroid, angle) = pca(&contour);
    Some(ContactEstimate {
        p_tac: centroid,
        method: Method::Pca,
        contact_area: comp.len(),
        major_axis_angle: angle,
    })
}
