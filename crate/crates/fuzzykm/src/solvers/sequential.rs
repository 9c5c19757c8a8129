//! The adaptive sequential solver.
//!
//! Clusters are discovered one at a time, largest sampled mass first. After
//! each discovery, every element's memberships to the processed clusters are
//! known on an eta1-grid, so elements can be binned by their grid-rounded
//! processed mass; sampling each bin equally concentrates queries on elements
//! that still carry mass to unprocessed clusters. Centers of later clusters
//! are self-normalized importance-sampling estimates with bin weight
//! `|bin| / draws`, which keeps both numerator and denominator unbiased.

use super::grid::estimate_memberships_grid;
use super::{
    renormalize_rows, stage_rng, MembershipQuerier, SolverDiagnostics, SolverError, SolverResult,
    StageLog,
};
use crate::core::{Clustering, Dataset, MembershipMatrix, SolverConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bin occupancy and draw counts for one adaptive stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageBins {
    /// Cluster whose grid estimate preceded this stage.
    pub after_cluster: usize,
    /// (grid level s, bin size) for each nonempty bin.
    pub bins: Vec<(usize, usize)>,
    /// Total indices drawn, `sum_s min(r, |bin_s|)`.
    pub drawn: u64,
}

pub fn sequential_solve(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    k: usize,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    if k == 0 {
        return Err(SolverError::Invalid("k must be at least 1".into()));
    }
    let n = x.len();
    let mut stages = StageLog::new(oracle.queries_total());
    let mut diagnostics = SolverDiagnostics::default();

    // stage one: uniform sample, all k memberships per draw, pick the
    // largest-mass cluster and estimate its center
    let mut rng = stage_rng(cfg.seed, 0);
    let samples: Vec<usize> = (0..cfg.m).map(|_| rng.random_range(0..n)).collect();
    let mut num = vec![vec![0.0; x.dim()]; k];
    let mut den = vec![0.0; k];
    for &i in &samples {
        for j in 0..k {
            let w = oracle.query(i, j)?.powf(cfg.alpha);
            den[j] += w;
            for (acc, &coord) in num[j].iter_mut().zip(x.point(i)) {
                *acc += w * coord;
            }
        }
    }
    let t1 = argmax_lowest(&den);
    if den[t1] <= 0.0 {
        return Err(SolverError::DegenerateSample { cluster: t1 });
    }
    let mut centers: Vec<Option<Vec<f64>>> = vec![None; k];
    centers[t1] = Some(num[t1].iter().map(|v| v / den[t1]).collect());
    stages.record("stage1_sample", oracle.queries_total());

    let mut order = vec![t1];
    // grid estimates at eta1 for processed clusters, by cluster index
    let mut coarse: Vec<Option<Vec<f64>>> = vec![None; k];
    let s_max = (1.0 / cfg.eta1).ceil() as usize;

    for ell in 1..k {
        let t_prev = *order.last().unwrap();
        let grid = estimate_memberships_grid(
            x,
            oracle,
            centers[t_prev].as_ref().unwrap(),
            t_prev,
            cfg.eta1,
        )?;
        coarse[t_prev] = Some(grid.values);
        stages.record(
            format!("grid_eta1_cluster_{t_prev}"),
            oracle.queries_total(),
        );

        // bin by grid-rounded processed mass; sums of eta1-multiples are
        // rounded back to the grid to absorb float drift
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); s_max + 1];
        for i in 0..n {
            let sum: f64 = order.iter().map(|&t| coarse[t].as_ref().unwrap()[i]).sum();
            let s = ((sum / cfg.eta1).round().max(0.0) as usize).min(s_max);
            bins[s].push(i);
        }

        // sample min(r, |bin|) per bin with replacement; query the sampled
        // elements' memberships to every unprocessed cluster
        let mut bin_rng = stage_rng(cfg.seed, ell as u64);
        let unprocessed: Vec<usize> = (0..k).filter(|j| !order.contains(j)).collect();
        let mut d = vec![0.0; k];
        let mut nm = vec![vec![0.0; x.dim()]; k];
        let mut drawn = 0u64;
        let mut bin_stats = Vec::new();
        for (s, members) in bins.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            bin_stats.push((s, members.len()));
            let draws = cfg.r.min(members.len());
            drawn += draws as u64;
            let weight = members.len() as f64 / draws as f64;
            for _ in 0..draws {
                let i = members[bin_rng.random_range(0..members.len())];
                for &j in &unprocessed {
                    let w = oracle.query(i, j)?.powf(cfg.alpha);
                    d[j] += weight * w;
                    for (acc, &coord) in nm[j].iter_mut().zip(x.point(i)) {
                        *acc += weight * w * coord;
                    }
                }
            }
        }
        let t_next = argmax_lowest_over(&d, &unprocessed);
        if d[t_next] <= 0.0 {
            return Err(SolverError::DegenerateStage { stage: ell });
        }
        centers[t_next] = Some(nm[t_next].iter().map(|v| v / d[t_next]).collect());
        order.push(t_next);
        diagnostics.stage_bins.push(StageBins {
            after_cluster: t_prev,
            bins: bin_stats,
            drawn,
        });
        stages.record(format!("bin_sample_{ell}"), oracle.queries_total());
    }

    // final pass: every cluster on the eta2-grid, then row renormalization
    let mut rows = vec![vec![0.0; k]; n];
    for j in 0..k {
        let grid = estimate_memberships_grid(x, oracle, centers[j].as_ref().unwrap(), j, cfg.eta2)?;
        for i in 0..n {
            rows[i][j] = grid.values[i];
        }
        stages.record(format!("grid_eta2_cluster_{j}"), oracle.queries_total());
    }
    renormalize_rows(&mut rows);

    let centers: Vec<Vec<f64>> = centers.into_iter().map(Option::unwrap).collect();
    let estimate = Clustering::new(centers, MembershipMatrix::new(rows)?)?;
    Ok(SolverResult {
        solver: "sequential".into(),
        estimate,
        ledger: oracle.ledger_snapshot(),
        per_stage: stages.into_list(),
        cluster_order: order,
        seed: cfg.seed,
        config: cfg.clone(),
        diagnostics,
    })
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = j;
        }
    }
    best
}

fn argmax_lowest_over(values: &[f64], over: &[usize]) -> usize {
    let mut best = over[0];
    for &j in over {
        if values[j] > values[best] {
            best = j;
        }
    }
    best
}

/// The self-normalized denominator `sum_s (|bin_s| / draws_s) sum_{i in Y_s} U[i][j]^alpha`
/// for a given binning and sampled multiset; exposed for the unbiasedness check.
pub fn importance_weighted_mass(
    bins: &[Vec<usize>],
    sampled: &[Vec<usize>],
    memberships: &[f64],
    alpha: f64,
) -> f64 {
    bins.iter()
        .zip(sampled)
        .filter(|(b, _)| !b.is_empty())
        .map(|(b, y)| {
            let weight = b.len() as f64 / y.len() as f64;
            weight * y.iter().map(|&i| memberships[i].powf(alpha)).sum::<f64>()
        })
        .sum()
}
