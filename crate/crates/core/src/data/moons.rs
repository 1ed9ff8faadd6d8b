use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Two interleaving half circles.
///
/// The first `n / 2` points lie on `(cos θ, sin θ)` with label 0, the rest on
/// `(1 - cos θ, 0.5 - sin θ)` with label 1, for `θ` evenly spaced on `[0, π]`.
/// Gaussian noise with standard deviation `noise_std` is added to both
/// coordinates; the noise is the only randomness.
pub fn make_moons(n_samples: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n_samples < 2 {
        return Err(Error::invalid("make_moons", "need at least 2 samples"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid("make_moons", format!("invalid noise {noise_std}")));
    }
    let n_outer = n_samples / 2;
    let n_inner = n_samples - n_outer;
    let grid = |count: usize| -> Vec<f64> {
        if count == 1 {
            return vec![0.0];
        }
        (0..count)
            .map(|i| PI * i as f64 / (count - 1) as f64)
            .collect()
    };

    let mut points = Vec::with_capacity(2 * n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for t in grid(n_outer) {
        points.extend([t.cos(), t.sin()]);
        labels.push(0);
    }
    for t in grid(n_inner) {
        points.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        for v in &mut points {
            *v += normal.sample(&mut rng);
        }
    }
    Dataset::new(Tensor::from_parts(vec![n_samples, 2], points), labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_points_sit_on_the_arcs() {
        let d = make_moons(100, 0.0, 0).unwrap();
        let x = d.inputs.data();
        assert_eq!((x[0], x[1]), (1.0, 0.0));
        assert_eq!(d.labels[0], 0);
        for i in 0..100 {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            let r = if d.labels[i] == 0 {
                (a * a + b * b).sqrt()
            } else {
                ((1.0 - a).powi(2) + (0.5 - b).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn inner_arc_midpoint() {
        // 3 inner points put θ = π/2 at the middle
        let d = make_moons(6, 0.0, 0).unwrap();
        let x = d.inputs.data();
        assert!((x[8] - 1.0).abs() < 1e-15);
        assert!((x[9] + 0.5).abs() < 1e-15);
        assert_eq!(d.labels[4], 1);
    }

    #[test]
    fn seeded_noise() {
        let a = make_moons(50, 0.1, 7).unwrap();
        let b = make_moons(50, 0.1, 7).unwrap();
        let c = make_moons(50, 0.1, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(make_moons(1, 0.1, 0).is_err());
    }
}
