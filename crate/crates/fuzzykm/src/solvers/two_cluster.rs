//! The k = 2 solver with data-dependent bins.
//!
//! With two clusters, querying one cluster reveals the other (the weights sum
//! to one), and the second cluster's memberships can be bracketed by
//! geometrically halving thresholds instead of a fixed grid: each halving
//! either closes a bin of at least ceil(log2 n) elements whose memberships
//! span at most a factor of two, or the few elements in a short gap are
//! queried individually ("special" elements). The resulting query count is
//! independent of how small the second cluster is.

use super::grid::estimate_memberships_grid;
use super::search::{binary_search2, ceil_log2};
use super::{
    renormalize_rows, stage_rng, MembershipQuerier, SolverDiagnostics, SolverError, SolverResult,
    StageLog,
};
use crate::core::{sort_by_distance, Clustering, Dataset, MembershipMatrix, SolverConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One adaptive bin: positions `lo..hi` in the distance-sorted order, all of
/// whose second-cluster memberships lie within a factor of two of `value`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct M2Bin {
    /// Halving level that closed this bin.
    pub level: usize,
    /// Start position (inclusive) in the sorted order.
    pub lo: usize,
    /// End position (exclusive).
    pub hi: usize,
    /// Exact membership of the bin's closest element, assigned to the whole bin.
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Membership2Stats {
    /// Queries spent inside binary searches.
    pub search_queries: u64,
    /// Boundary queries (the farthest element plus one per closed bin).
    pub boundary_queries: u64,
    /// Queries spent on special elements.
    pub special_queries: u64,
    pub if_branches: u32,
    pub else_branches: u32,
    /// Size of the near set assigned membership zero.
    pub near_count: usize,
}

/// Everything the adaptive pass learns about the second cluster.
#[derive(Debug, Clone)]
pub struct Membership2Outcome {
    /// Distance-sorted order from the first cluster's estimated center.
    pub permutation: Vec<usize>,
    /// Estimated second-cluster memberships by original index.
    pub estimates: Vec<f64>,
    /// Near set: elements assigned membership 0 (original indices).
    pub near: Vec<usize>,
    /// Special elements queried exactly (original indices).
    pub specials: Vec<usize>,
    /// The farthest element, queried exactly during initialization.
    pub farthest: usize,
    /// Closed bins, farthest first.
    pub bins: Vec<M2Bin>,
    pub stats: Membership2Stats,
}

/// Adaptive estimation of the second cluster's memberships given an estimated
/// center for the first; queries only cluster `t1`.
pub fn membership2(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    center_hat_t1: &[f64],
    t1: usize,
) -> Result<Membership2Outcome, SolverError> {
    let n = x.len();
    if n < 2 {
        return Err(SolverError::Invalid("need at least two elements".into()));
    }
    let pi = sort_by_distance(x, center_hat_t1);
    let lthr = ceil_log2(n) as usize;
    let q_max = 3 * lthr.max(1);
    let mut stats = Membership2Stats::default();
    let mut estimates = vec![0.0; n];
    let mut specials = Vec::new();
    let mut bins = Vec::new();

    // the farthest element anchors the first threshold
    let far_pos = n - 1;
    let eta1 = 1.0 - oracle.query(pi[far_pos], t1)?;
    stats.boundary_queries += 1;
    estimates[pi[far_pos]] = eta1;
    if eta1 <= 0.0 {
        return Err(SolverError::DegenerateSecondCluster);
    }

    let mut boundary = far_pos; // position of the current threshold element
    let mut eta = eta1;
    let probes = super::search::probes_per_search(n);
    for q in 2..=q_max {
        let eta_q = eta / 2.0;
        let found = binary_search2(oracle, &pi, t1, eta_q)?;
        stats.search_queries += probes;
        // the boundary element's membership is at least eta_q, so the search
        // never lands past it
        let p_new = found.min(boundary);
        if boundary - p_new >= lthr {
            // wide gap: close a bin, assign the membership of its closest element
            let value = 1.0 - oracle.query(pi[p_new], t1)?;
            stats.boundary_queries += 1;
            for pos in p_new..boundary {
                estimates[pi[pos]] = value;
            }
            bins.push(M2Bin {
                level: q,
                lo: p_new,
                hi: boundary,
                value,
            });
            boundary = p_new;
            eta = eta_q;
            stats.if_branches += 1;
        } else {
            // short gap: force the boundary ceil(log2 n) positions down and
            // query everything in between, keeping the per-level special
            // count at ceil(log2 n)
            let forced = boundary.saturating_sub(lthr);
            for pos in forced..boundary {
                let value = 1.0 - oracle.query(pi[pos], t1)?;
                stats.special_queries += 1;
                estimates[pi[pos]] = value;
                specials.push(pi[pos]);
            }
            if forced == boundary {
                // boundary already at the start; read the threshold there
                let value = 1.0 - oracle.query(pi[forced], t1)?;
                stats.special_queries += 1;
                estimates[pi[forced]] = value;
            }
            eta = estimates[pi[forced]];
            boundary = forced;
            stats.else_branches += 1;
        }
    }

    let near: Vec<usize> = (0..boundary).map(|pos| pi[pos]).collect();
    stats.near_count = near.len();
    let farthest = pi[far_pos];
    Ok(Membership2Outcome {
        permutation: pi,
        estimates,
        near,
        specials,
        farthest,
        bins,
        stats,
    })
}

pub fn two_cluster_solve(
    x: &Dataset,
    oracle: &mut dyn MembershipQuerier,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    let n = x.len();
    if n < 2 {
        return Err(SolverError::Invalid(
            "the two-cluster solver needs n >= 2".into(),
        ));
    }
    let k = 2usize;
    let mut stages = StageLog::new(oracle.queries_total());

    // stage one: uniform sample, both memberships per draw
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
    let t1 = if den[1] > den[0] { 1 } else { 0 };
    let t2 = 1 - t1;
    if den[t1] <= 0.0 {
        return Err(SolverError::DegenerateSample { cluster: t1 });
    }
    let mu_t1: Vec<f64> = num[t1].iter().map(|v| v / den[t1]).collect();
    stages.record("stage1_sample", oracle.queries_total());

    // adaptive bracketing of the second cluster's memberships
    let m2 = membership2(x, oracle, &mu_t1, t1)?;
    stages.record("membership2", oracle.queries_total());

    // second-center estimate: importance-sampled bins + exact specials + near set
    let mut bin_rng = stage_rng(cfg.seed, 1);
    let mut d2 = 0.0;
    let mut n2 = vec![0.0; x.dim()];
    for bin in &m2.bins {
        let size = bin.hi - bin.lo;
        let weight = size as f64 / cfg.r as f64;
        for _ in 0..cfg.r {
            let pos = bin_rng.random_range(bin.lo..bin.hi);
            let i = m2.permutation[pos];
            let w = oracle.query(i, t2)?.powf(cfg.alpha);
            d2 += weight * w;
            for (acc, &coord) in n2.iter_mut().zip(x.point(i)) {
                *acc += weight * w * coord;
            }
        }
    }
    for &i in m2.specials.iter().chain(std::iter::once(&m2.farthest)) {
        let w = m2.estimates[i].powf(cfg.alpha);
        d2 += w;
        for (acc, &coord) in n2.iter_mut().zip(x.point(i)) {
            *acc += w * coord;
        }
    }
    if !m2.near.is_empty() {
        let weight = m2.near.len() as f64 / cfg.r as f64;
        for _ in 0..cfg.r {
            let i = m2.near[bin_rng.random_range(0..m2.near.len())];
            let w = oracle.query(i, t2)?.powf(cfg.alpha);
            d2 += weight * w;
            for (acc, &coord) in n2.iter_mut().zip(x.point(i)) {
                *acc += weight * w * coord;
            }
        }
    }
    if d2 <= 0.0 {
        return Err(SolverError::DegenerateSecondCluster);
    }
    let mu_t2: Vec<f64> = n2.iter().map(|v| v / d2).collect();
    stages.record("bin_sample", oracle.queries_total());

    // final grid pass for both clusters at eta
    let mut centers = vec![Vec::new(), Vec::new()];
    centers[t1] = mu_t1;
    centers[t2] = mu_t2;
    let mut rows = vec![vec![0.0; k]; n];
    for j in 0..k {
        let grid = estimate_memberships_grid(x, oracle, &centers[j], j, cfg.eta)?;
        for i in 0..n {
            rows[i][j] = grid.values[i];
        }
        stages.record(format!("grid_cluster_{j}"), oracle.queries_total());
    }
    // with two clusters the first column is the second's complement
    for row in rows.iter_mut() {
        row[t1] = 1.0 - row[t2];
    }
    renormalize_rows(&mut rows);

    let estimate = Clustering::new(centers, MembershipMatrix::new(rows)?)?;
    Ok(SolverResult {
        solver: "two-cluster".into(),
        estimate,
        ledger: oracle.ledger_snapshot(),
        per_stage: stages.into_list(),
        cluster_order: vec![t1, t2],
        seed: cfg.seed,
        config: cfg.clone(),
        diagnostics: SolverDiagnostics {
            membership2: Some(m2.stats),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{exact_oracle, VecOracle};
    use super::*;
    use crate::core::update_memberships;

    /// Points on a line whose second-cluster memberships follow an exact
    /// geometric profile along the sort order. Values at whole halving
    /// levels are computed with integral powers of two so the threshold
    /// comparisons are exact in f64.
    fn geometric_instance(n: usize, step: usize, top: f64) -> (Dataset, Vec<f64>) {
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let x = Dataset::new(points).unwrap();
        let u2: Vec<f64> = (0..n)
            .map(|i| {
                let depth = n - 1 - i;
                let (a, b) = (depth / step, depth % step);
                top * 2f64.powi(-(a as i32)) * 2f64.powf(-(b as f64) / step as f64)
            })
            .collect();
        (x, u2)
    }

    fn oracle_from_u2(u2: &[f64]) -> VecOracle {
        VecOracle::new(u2.iter().map(|&v| vec![1.0 - v, v]).collect())
    }

    #[test]
    fn equal_memberships_collapse_to_a_single_bin() {
        let n = 64;
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let x = Dataset::new(points).unwrap();
        let u2 = vec![0.5; n];
        let mut o = oracle_from_u2(&u2);
        let out = membership2(&x, &mut o, &[0.0], 0).unwrap();
        assert_eq!(out.bins.len(), 1);
        assert_eq!(out.bins[0].lo, 0);
        assert_eq!(out.bins[0].hi, n - 1);
        assert!(out.specials.is_empty());
        for i in 0..n {
            assert_eq!(out.estimates[i], 0.5);
        }
    }

    #[test]
    fn geometric_profile_closes_one_bin_per_halving_without_specials() {
        let n = 512;
        let lthr = ceil_log2(n) as usize; // 9
        let step = lthr + 3;
        let (x, u2) = geometric_instance(n, step, 0.5);
        let mut o = oracle_from_u2(&u2);
        let out = membership2(&x, &mut o, &[0.0], 0).unwrap();
        assert!(
            out.specials.is_empty(),
            "specials: {:?}",
            out.specials.len()
        );
        assert_eq!(out.stats.else_branches, 0);
        // every halving closes a bin of exactly `step` elements
        assert_eq!(out.bins.len(), 3 * lthr - 1);
        for bin in &out.bins {
            assert_eq!(bin.hi - bin.lo, step);
        }
    }

    #[test]
    fn bins_satisfy_the_factor_two_bracket() {
        for (n, step, top) in [(256usize, 11usize, 0.9), (300, 15, 0.4)] {
            let (x, u2) = geometric_instance(n, step, top);
            let mut o = oracle_from_u2(&u2);
            let out = membership2(&x, &mut o, &[0.0], 0).unwrap();
            for bin in &out.bins {
                let vals: Vec<f64> = (bin.lo..bin.hi)
                    .map(|pos| u2[out.permutation[pos]])
                    .collect();
                let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
                let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
                assert!(hi <= 2.0 * lo + 1e-12, "bin {bin:?}: max {hi} min {lo}");
            }
        }
    }

    #[test]
    fn bin_and_special_counts_respect_the_stated_budget() {
        let (x, u2) = geometric_instance(400, 5, 0.8); // short gaps force specials
        let mut o = oracle_from_u2(&u2);
        let out = membership2(&x, &mut o, &[0.0], 0).unwrap();
        let lthr = ceil_log2(400) as usize; // 9
        assert!(out.bins.len() <= 1 + 3 * lthr);
        assert!(out.specials.len() <= 3 * lthr * lthr);
    }

    #[test]
    fn all_pure_first_cluster_is_degenerate() {
        let n = 16;
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let x = Dataset::new(points).unwrap();
        let u2 = vec![0.0; n];
        let mut o = oracle_from_u2(&u2);
        assert!(matches!(
            membership2(&x, &mut o, &[0.0], 0),
            Err(SolverError::DegenerateSecondCluster)
        ));
    }

    #[test]
    fn balanced_two_blob_recovers_both_centers() {
        let mut points = Vec::new();
        for i in 0..60 {
            points.push(vec![
                0.1 * (1 << (i % 6)) as f64 + if i < 30 { 0.0 } else { 200.0 },
            ]);
        }
        let x = Dataset::new(points).unwrap();
        let out = crate::core::lloyd_fuzzy(
            &x,
            2,
            2.0,
            crate::core::LloydInit::Centers(vec![vec![3.0], vec![203.0]]),
            400,
            1e-14,
        )
        .unwrap();
        let centers = out.clustering.centers().to_vec();
        let u = update_memberships(&x, &centers, 2.0).unwrap();
        let mut o = exact_oracle(&u);
        let cfg = SolverConfig {
            m: 400,
            r: 80,
            eta: 0.1,
            seed: 3,
            ..Default::default()
        };
        let res = two_cluster_solve(&x, &mut o, &cfg).unwrap();
        for (mu_hat, mu) in res.estimate.centers().iter().zip(&centers) {
            let err = (mu_hat[0] - mu[0]).abs();
            assert!(err < 1.0, "center error {err}");
        }
        for row in res.estimate.memberships().rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
