//! Seeded synthetic benchmark generation.
//!
//! Centers are placed with a guaranteed per-coordinate gap; each cluster is a
//! spherical Gaussian around its center. With `separate_first_only`, only the
//! first center keeps the guaranteed gap from the others (the rest may land
//! close together); the default enforces the gap for every pair, which keeps
//! the ordering radius gamma comfortably large.

use crate::core::{CoreError, Dataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub k: usize,
    pub d: usize,
    /// Cluster sizes L_1..L_k.
    pub sizes: Vec<usize>,
    /// Minimum per-coordinate gap between centers.
    pub center_separation: f64,
    /// Per-coordinate standard deviation of each cluster.
    pub point_std: f64,
    pub seed: u64,
    /// Separate only the first center from the rest (the rest may share a band).
    #[serde(default)]
    pub separate_first_only: bool,
}

impl SyntheticSpec {
    /// The imbalanced size family: `sizes = [l1, l1*zeta, ..., l1*zeta]`.
    pub fn with_zeta(k: usize, d: usize, l1: usize, zeta: f64, seed: u64) -> Self {
        let mut sizes = vec![l1; k];
        for s in sizes.iter_mut().skip(1) {
            *s = ((l1 as f64) * zeta).round().max(1.0) as usize;
        }
        Self {
            k,
            d,
            sizes,
            center_separation: 1000.0,
            point_std: 20.0,
            seed,
            separate_first_only: false,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.k == 0 || self.d == 0 {
            return Err(CoreError::Config("k and d must be positive".into()));
        }
        if self.sizes.len() != self.k {
            return Err(CoreError::Config(format!(
                "{} sizes for k = {}",
                self.sizes.len(),
                self.k
            )));
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Config("every cluster size must be >= 1".into()));
        }
        if !(self.center_separation > 0.0) {
            return Err(CoreError::Config(
                "center separation must be positive".into(),
            ));
        }
        if !(self.point_std >= 0.0) {
            return Err(CoreError::Config("point std must be nonnegative".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draws centers, then `sizes[j]` Gaussian points around each; returns the
/// dataset and generating labels. Deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<usize>), CoreError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sep = spec.center_separation;
    let mut centers = vec![vec![0.0; spec.d]; spec.k];
    if spec.separate_first_only {
        // first center at the origin; the rest share a band at >= sep per coordinate
        for j in 1..spec.k {
            for t in 0..spec.d {
                centers[j][t] = rng.random_range(sep..2.0 * sep);
            }
        }
    } else {
        // per coordinate, assign centers to slots 1.5*sep apart with jitter
        // under 0.5*sep, so every pair keeps a gap of at least sep
        for t in 0..spec.d {
            let mut slots: Vec<usize> = (0..spec.k).collect();
            slots.shuffle(&mut rng);
            for (j, &slot) in slots.iter().enumerate() {
                centers[j][t] = slot as f64 * 1.5 * sep + rng.random_range(0.0..0.5 * sep);
            }
        }
    }
    let n: usize = spec.sizes.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (j, &size) in spec.sizes.iter().enumerate() {
        for _ in 0..size {
            let p: Vec<f64> = (0..spec.d)
                .map(|t| centers[j][t] + spec.point_std * gaussian(&mut rng))
                .collect();
            points.push(p);
            labels.push(j);
        }
    }
    Ok((Dataset::new(points)?, labels))
}
