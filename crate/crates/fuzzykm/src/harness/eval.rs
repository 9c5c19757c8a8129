//! Evaluation of an estimated clustering against the hidden target.
//!
//! Estimated cluster labels are arbitrary, so center and membership errors
//! are reported under the sum-minimizing assignment of estimated centers to
//! target centers (Hungarian, exact). Classification accuracy is deliberately
//! *not* permutation-aligned: it compares `argmax_j U_hat[i][j]` against the
//! raw label, which is how an estimate that never saw the labels would be
//! used (and what makes label-blind baselines average near 1/k).

use super::HarnessError;
use crate::core::{distance, Clustering};
use crate::oracle::QueryLedger;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Max center distance under the matching (epsilon_1).
    pub center_error: f64,
    /// Max entrywise membership error under the matching (epsilon_2).
    pub membership_error: f64,
    /// Fraction of elements whose argmax membership equals their label.
    pub argmax_accuracy: Option<f64>,
    /// `matching[j]` = estimated cluster matched to target cluster j.
    pub matching: Vec<usize>,
    /// Sum of matched center distances (the assignment objective).
    pub matching_cost: f64,
    pub queries: QueryLedger,
}

/// Minimum-cost perfect matching on a square cost matrix; returns
/// (row -> column assignment, total cost). Exact for any size used here.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    let inf = f64::INFINITY;
    // potentials u, v and matching p over 1-based columns; p[0] holds the
    // row currently being inserted
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
        total += cost[p[j] - 1][j - 1];
    }
    (assignment, total)
}

/// Argmax with ties broken toward the lowest cluster index.
pub fn argmax_label(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn evaluate(
    target: &Clustering,
    estimate: &Clustering,
    labels: Option<&[usize]>,
    queries: QueryLedger,
) -> Result<EvalReport, HarnessError> {
    let k = target.k();
    if estimate.k() != k {
        return Err(HarnessError::Config(format!(
            "target has {k} clusters, estimate has {}",
            estimate.k()
        )));
    }
    if estimate.memberships().n() != target.memberships().n() {
        return Err(HarnessError::Config(format!(
            "target covers {} elements, estimate {}",
            target.memberships().n(),
            estimate.memberships().n()
        )));
    }
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..k)
                .map(|l| distance(&target.centers()[j], &estimate.centers()[l]))
                .collect()
        })
        .collect();
    let (matching, matching_cost) = hungarian(&cost);
    let center_error = (0..k).map(|j| cost[j][matching[j]]).fold(0.0, f64::max);
    let n = target.memberships().n();
    let mut membership_error = 0.0f64;
    for i in 0..n {
        for j in 0..k {
            let diff =
                (target.memberships().get(i, j) - estimate.memberships().get(i, matching[j])).abs();
            membership_error = membership_error.max(diff);
        }
    }
    let argmax_accuracy = labels.map(|ls| {
        let hits = (0..n)
            .filter(|&i| argmax_label(estimate.memberships().row(i)) == ls[i])
            .count();
        hits as f64 / n as f64
    });
    Ok(EvalReport {
        center_error,
        membership_error,
        argmax_accuracy,
        matching,
        matching_cost,
        queries,
    })
}
