//! Membership recovery on an eta-grid given an estimated center.
//!
//! Sort the dataset by distance from the estimated center; memberships to the
//! cluster are then non-increasing along that order (provided the estimate is
//! within `gamma` of the true center, so the order matches the true one).
//! One binary search per grid level `s*eta` finds where the sequence crosses
//! it, and each element is assigned the highest grid level it clears. The
//! estimate undershoots by construction: `0 <= U - U_hat <= eta`.

use super::search::{binary_search_threshold, probes_per_search};
use super::{MembershipQuerier, SolverError};
use crate::core::{sort_by_distance, Dataset};
use serde::{Deserialize, Serialize};

/// Grid-valued membership estimates for one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEstimate {
    /// Estimated memberships by original element index; multiples of `grid`.
    pub values: Vec<f64>,
    /// The grid width eta.
    pub grid: f64,
    /// Prefix lengths `l_s` (number of sorted elements clearing level `s*eta`)
    /// for `s = 0..=ceil(1/eta)`.
    pub thresholds: Vec<usize>,
    /// The distance-sorted order the searches ran along.
    pub permutation: Vec<usize>,
}

impl GridEstimate {
    /// Exact query cost of constructing a grid estimate on `n` elements.
    pub fn query_cost(n: usize, eta: f64) -> u64 {
        (grid_levels(eta) as u64 + 1) * probes_per_search(n)
    }
}

pub(crate) fn grid_levels(eta: f64) -> usize {
    (1.0 / eta).ceil() as usize
}

/// Recovers every element's membership to cluster `j` on a grid of width
/// `eta`, using `(ceil(1/eta) + 1) * probes_per_search(n)` membership queries.
pub fn estimate_memberships_grid(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    center_hat: &[f64],
    j: usize,
    eta: f64,
) -> Result<GridEstimate, SolverError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(SolverError::Invalid(format!(
            "eta must lie in (0, 1], got {eta}"
        )));
    }
    let pi = sort_by_distance(x, center_hat);
    let n = x.len();
    let s_max = grid_levels(eta);
    let mut thresholds = Vec::with_capacity(s_max + 1);
    for s in 0..=s_max {
        thresholds.push(binary_search_threshold(oracle, &pi, j, s as f64 * eta)?);
    }
    let mut values = vec![0.0; n];
    for s in 0..=s_max {
        let hi = thresholds[s];
        let lo = if s == s_max { 0 } else { thresholds[s + 1] };
        for pos in lo..hi {
            values[pi[pos]] = s as f64 * eta;
        }
    }
    Ok(GridEstimate {
        values,
        grid: eta,
        thresholds,
        permutation: pi,
    })
}
