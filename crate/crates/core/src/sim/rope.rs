//! Particle chain for the traced curve and its constraint projections.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeState {
    pub particles: Vec<Vec2>,
    /// Length of every segment between consecutive particles.
    pub rest_length: f64,
    pub pinned_index: usize,
    pub friction_coeff: f64,
    pub compliance: f64,
    pub dangling_pull: f64,
}

fn direction_or(v: Vec2, fallback: Vec2) -> Vec2 {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        fallback
    }
}

impl RopeState {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_rest_length(&self) -> f64 {
        self.rest_length * (self.particles.len() - 1) as f64
    }

    pub fn pinned(&self) -> Vec2 {
        self.particles[self.pinned_index]
    }

    /// Largest relative deviation of a segment length from the rest length.
    pub fn max_strain(&self) -> f64 {
        self.particles
            .windows(2)
            .map(|w| ((w[1] - w[0]).norm() / self.rest_length - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the last particle at or before arc length `s`.
    pub fn segment_index(&self, s: f64) -> usize {
        let idx = (s / self.rest_length).floor().max(0.0) as usize;
        idx.min(self.particles.len() - 2)
    }

    /// Lays the pinned side straight from the pin through `contact`, which sits
    /// at arc length `s`, and continues the grasped segment along the same line.
    pub fn place_taut(&mut self, s: f64, contact: Vec2) {
        let p0 = self.pinned();
        let u = direction_or(contact - p0, self.first_direction());
        let m = self.segment_index(s);
        for i in 1..=(m + 1).min(self.particles.len() - 1) {
            self.particles[i] = p0 + u * (i as f64 * self.rest_length);
        }
    }

    /// Reshapes the slack pinned side so the chain reaches `contact` at arc
    /// length `s`, then routes the grasped segment through `contact`.
    ///
    /// Forward-and-backward reaching passes; the last pass starts at the pin,
    /// so every full segment ends exactly at rest length.
    pub fn place_slack(&mut self, s: f64, contact: Vec2, iterations: usize) {
        let r = self.rest_length;
        let m = self.segment_index(s);
        let tail_len = s - m as f64 * r;
        let p0 = self.pinned();
        // Nearly straight chains converge slowly; keep going (up to 10x) until
        // the grasped particle sits at the right distance from the contact.
        for it in 0..10 * iterations.max(1) {
            if it >= iterations && ((self.particles[m] - contact).norm() - tail_len).abs() < 1e-9 {
                break;
            }
            if m >= 1 {
                let fallback = direction_or(self.particles[m] - p0, Vec2::x());
                self.particles[m] =
                    contact + direction_or(self.particles[m] - contact, -fallback) * tail_len;
                for i in (1..m).rev() {
                    let next = self.particles[i + 1];
                    let d = direction_or(self.particles[i] - next, -fallback);
                    self.particles[i] = next + d * r;
                }
            }
            for i in 1..=m {
                let prev = self.particles[i - 1];
                let d = direction_or(self.particles[i] - prev, Vec2::x());
                self.particles[i] = prev + d * r;
            }
        }
        if m >= 1 && ((self.particles[m] - contact).norm() - tail_len).abs() > 1e-7 {
            self.place_bent(s, contact);
        }
        if m + 1 < self.particles.len() {
            let pm = self.particles[m];
            let fallback = direction_or(self.particles[m + 1] - pm, Vec2::x());
            let d = direction_or(contact - pm, fallback);
            self.particles[m + 1] = pm + d * r;
        }
    }

    /// Two straight legs of length `s/2` meeting at an apex, on the side where
    /// the chain currently bulges. Used when reaching passes stall on a nearly
    /// straight chain.
    fn place_bent(&mut self, s: f64, contact: Vec2) {
        let p0 = self.pinned();
        let m = self.segment_index(s);
        let chord = contact - p0;
        let d = chord.norm().min(s);
        let u = direction_or(chord, self.first_direction());
        let n = Vec2::new(-u.y, u.x);
        let side = if (self.particles[m.div_ceil(2)] - p0).dot(&n) < 0.0 { -1.0 } else { 1.0 };
        let h = ((s / 2.0).powi(2) - (d / 2.0).powi(2)).max(0.0).sqrt();
        let apex = p0 + u * (d / 2.0) + n * (side * h);
        let leg1 = direction_or(apex - p0, u);
        let leg2 = direction_or(contact - apex, u);
        for i in 1..=m {
            let a = i as f64 * self.rest_length;
            self.particles[i] = if a <= s / 2.0 {
                p0 + leg1 * a
            } else {
                apex + leg2 * (a - s / 2.0)
            };
        }
    }

    /// Drags the free tail behind particle `first - 1` with compliant distance
    /// projections (the leading particle is treated as immovable).
    pub fn follow_tail(&mut self, first: usize, alpha_tilde: f64, iterations: usize) {
        let r = self.rest_length;
        let gain = 1.0 / (1.0 + alpha_tilde);
        for _ in 0..iterations {
            for k in first.max(1)..self.particles.len() {
                let lead = self.particles[k - 1];
                let d = self.particles[k] - lead;
                let len = d.norm();
                if len < 1e-15 {
                    continue;
                }
                let c = len - r;
                self.particles[k] -= d / len * (c * gain);
            }
        }
    }

    fn first_direction(&self) -> Vec2 {
        direction_or(self.particles[1] - self.particles[0], Vec2::x())
    }
}
