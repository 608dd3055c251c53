//! Tabulated per-slot detection probabilities for two clusters.
//!
//! Row `(n1, n2)` gives, for each cluster, the probability of `u = 0..=3`
//! successful detections when `n1` C1 and `n2` C2 packets share a slot
//! (450 m / 900 m clusters, 25 m radius).

use rand::Rng;

use crate::rng::SimRng;

/// Largest per-cluster concurrency covered by the table.
pub const MAX_TABULATED: usize = 3;

/// `TABLE[n1][n2][cluster][u]`.
const TABLE: [[[[f64; 4]; 2]; 4]; 4] = [
    [
        [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        [[1.0, 0.0, 0.0, 0.0], [0.567, 0.433, 0.0, 0.0]],
        [[1.0, 0.0, 0.0, 0.0], [0.477, 0.490, 0.033, 0.0]],
        [[1.0, 0.0, 0.0, 0.0], [0.521, 0.424, 0.055, 0.0]],
    ],
    [
        [[0.163, 0.837, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        [[0.401, 0.599, 0.0, 0.0], [0.804, 0.196, 0.0, 0.0]],
        [[0.564, 0.436, 0.0, 0.0], [0.766, 0.227, 0.007, 0.0]],
        [[0.675, 0.325, 0.0, 0.0], [0.788, 0.200, 0.012, 0.0]],
    ],
    [
        [[0.606, 0.274, 0.120, 0.0], [1.0, 0.0, 0.0, 0.0]],
        [[0.677, 0.249, 0.074, 0.0], [0.941, 0.059, 0.0, 0.0]],
        [[0.734, 0.220, 0.046, 0.0], [0.929, 0.070, 0.001, 0.0]],
        [[0.780, 0.191, 0.029, 0.0], [0.935, 0.062, 0.003, 0.0]],
    ],
    [
        [[0.741, 0.167, 0.079, 0.013], [1.0, 0.0, 0.0, 0.0]],
        [[0.779, 0.164, 0.049, 0.008], [0.984, 0.016, 0.0, 0.0]],
        [[0.810, 0.155, 0.031, 0.004], [0.980, 0.020, 0.0, 0.0]],
        [[0.836, 0.143, 0.019, 0.002], [0.981, 0.019, 0.0, 0.0]],
    ],
];

/// Success-count distribution for `cluster` (0 = C1, 1 = C2) in row `(n1, n2)`.
pub fn marginal(n1: usize, n2: usize, cluster: usize) -> Option<[f64; 4]> {
    if n1 > MAX_TABULATED || n2 > MAX_TABULATED || cluster > 1 {
        return None;
    }
    Some(TABLE[n1][n2][cluster])
}

/// Expected number of successes for `cluster` in row `(n1, n2)`.
pub fn expected_successes(n1: usize, n2: usize, cluster: usize) -> Option<f64> {
    marginal(n1, n2, cluster).map(|p| p.iter().enumerate().map(|(u, &q)| u as f64 * q).sum())
}

/// Inverse-CDF draw of a success count from a tabulated marginal.
pub fn draw_successes(probabilities: &[f64; 4], rng: &mut SimRng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (u, &p) in probabilities.iter().enumerate() {
        acc += p;
        if x < acc {
            return u;
        }
    }
    // Rounding in the table can leave the total just under 1.
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
