//! Center estimation from uniformly sampled membership queries.
//!
//! Both the numerator and denominator of the weighted mean
//! `sum U^alpha x / sum U^alpha` are unbiased when indices are drawn
//! uniformly with replacement, which is what drives the estimation-error
//! bound reported by [`super::uniform_mean_error_bound`].

use super::{MembershipQuerier, SolverError};
use crate::core::Dataset;
use rand::Rng;

/// Weighted-mean center estimate over an explicit index multiset; queries
/// `U[i][j]` once per listed index (with multiplicity).
pub fn estimate_center_from_samples(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    j: usize,
    samples: &[usize],
    alpha: f64,
) -> Result<Vec<f64>, SolverError> {
    let mut num = vec![0.0; x.dim()];
    let mut den = 0.0;
    for &i in samples {
        let w = oracle.query(i, j)?.powf(alpha);
        den += w;
        for (acc, &coord) in num.iter_mut().zip(x.point(i)) {
            *acc += w * coord;
        }
    }
    if den <= 0.0 {
        return Err(SolverError::DegenerateSample { cluster: j });
    }
    num.iter_mut().for_each(|v| *v /= den);
    Ok(num)
}

/// Draws `m` indices uniformly with replacement and returns the weighted-mean
/// center estimate for cluster `j`; exactly `m` membership queries.
pub fn estimate_center_uniform(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    j: usize,
    m: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SolverError> {
    if m == 0 {
        return Err(SolverError::Invalid("m must be positive".into()));
    }
    let samples: Vec<usize> = (0..m).map(|_| rng.random_range(0..x.len())).collect();
    estimate_center_from_samples(x, oracle, j, &samples, alpha)
}
