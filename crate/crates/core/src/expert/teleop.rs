//! Teleoperation feedback: manipulability and the near-singularity alert.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use crate::sim::arm::position_jacobian;

pub const ALERT_RATIO: f64 = 0.2;
pub const W_MAX_SAMPLES: usize = 10_000;
const W_MAX_SEED: u64 = 0x5_EED0_FA11;

/// `sqrt(det(J Jᵀ))` of the planar position Jacobian.
///
/// The determinant is expanded as a sum of squared 2×2 minors (Cauchy–Binet),
/// which stays non-negative near singular configurations.
pub fn manipulability(q: &[f64], link_lengths: &[f64]) -> f64 {
    let j = position_jacobian(q, link_lengths);
    let n = j.ncols();
    let mut det = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let minor = j[(0, a)] * j[(1, b)] - j[(0, b)] * j[(1, a)];
            det += minor * minor;
        }
    }
    det.sqrt()
}

/// True iff `w < λ_w · w_max` (strict).
pub fn singularity_alert(w: f64, w_max: f64, lambda_w: f64) -> bool {
    w < lambda_w * w_max
}

/// Largest manipulability over seeded uniform joint samples in `[-π, π)ⁿ`.
pub fn sample_w_max(link_lengths: &[f64], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![0.0; link_lengths.len()];
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        for qi in q.iter_mut() {
            *qi = rng.random_range(-PI..PI);
        }
        best = best.max(manipulability(&q, link_lengths));
    }
    best
}

/// Cached per-arm `w_max` from the default sample budget.
pub fn w_max(link_lengths: &[f64]) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<Vec<u64>, f64>>> = OnceLock::new();
    let key: Vec<u64> = link_lengths.iter().map(|l| l.to_bits()).collect();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(w) = cache.lock().expect("w_max cache").get(&key) {
        return *w;
    }
    let w = sample_w_max(link_lengths, W_MAX_SAMPLES, W_MAX_SEED);
    cache.lock().expect("w_max cache").insert(key, w);
    w
}
