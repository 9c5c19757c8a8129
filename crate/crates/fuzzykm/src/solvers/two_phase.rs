//! The non-adaptive two-phase solver.
//!
//! Phase one draws `m` indices uniformly with replacement and queries all `k`
//! memberships for each (exactly `k*m` queries), estimating every center as a
//! weighted mean in one pass. Phase two recovers each cluster's memberships
//! on the eta-grid and renormalizes rows to the simplex.

use super::grid::estimate_memberships_grid;
use super::{
    renormalize_rows, stage_rng, MembershipQuerier, SolverDiagnostics, SolverError, SolverResult,
    StageLog,
};
use crate::core::{Clustering, Dataset, MembershipMatrix, SolverConfig};
use rand::Rng;

pub fn two_phase_solve(
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

    // phase one: km membership queries, one weighted mean per cluster
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
    let mut centers = Vec::with_capacity(k);
    for j in 0..k {
        if den[j] <= 0.0 {
            return Err(SolverError::DegenerateSample { cluster: j });
        }
        centers.push(num[j].iter().map(|v| v / den[j]).collect::<Vec<f64>>());
    }
    stages.record("centers_sample", oracle.queries_total());

    // phase two: per-cluster grid estimates
    let mut rows = vec![vec![0.0; k]; n];
    for (j, center) in centers.iter().enumerate() {
        let grid = estimate_memberships_grid(x, oracle, center, j, cfg.eta)?;
        for i in 0..n {
            rows[i][j] = grid.values[i];
        }
        stages.record(format!("grid_cluster_{j}"), oracle.queries_total());
    }
    renormalize_rows(&mut rows);

    let estimate = Clustering::new(centers, MembershipMatrix::new(rows)?)?;
    Ok(SolverResult {
        solver: "two-phase".into(),
        estimate,
        ledger: oracle.ledger_snapshot(),
        per_stage: stages.into_list(),
        cluster_order: (0..k).collect(),
        seed: cfg.seed,
        config: cfg.clone(),
        diagnostics: SolverDiagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::grid::GridEstimate;
    use super::super::testutil::exact_oracle;
    use super::*;
    use crate::core::update_memberships;

    fn line_instance() -> (Dataset, MembershipMatrix) {
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                if i < 20 {
                    vec![i as f64 * 0.05]
                } else {
                    vec![10.0 + (i - 20) as f64 * 0.05]
                }
            })
            .collect();
        let x = Dataset::new(points).unwrap();
        let centers = vec![vec![0.5], vec![10.5]];
        let u = update_memberships(&x, &centers, 2.0).unwrap();
        (x, u)
    }

    #[test]
    fn k1_gives_all_ones_after_renormalization() {
        let (x, _) = line_instance();
        let u = MembershipMatrix::new(vec![vec![1.0]; x.len()]).unwrap();
        let mut o = exact_oracle(&u);
        let cfg = SolverConfig {
            m: 16,
            eta: 0.25,
            seed: 9,
            ..Default::default()
        };
        let res = two_phase_solve(&x, &mut o, 1, &cfg).unwrap();
        for i in 0..x.len() {
            assert!((res.estimate.memberships().get(i, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one_and_ledger_matches_closed_form() {
        let (x, u) = line_instance();
        let mut o = exact_oracle(&u);
        let cfg = SolverConfig {
            m: 50,
            eta: 0.1,
            seed: 4,
            ..Default::default()
        };
        let res = two_phase_solve(&x, &mut o, 2, &cfg).unwrap();
        for row in res.estimate.memberships().rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let expected = 2 * cfg.m as u64 + 2 * GridEstimate::query_cost(x.len(), cfg.eta);
        assert_eq!(res.total_queries(), expected);
        assert_eq!(
            res.per_stage[0],
            ("centers_sample".to_string(), 2 * cfg.m as u64)
        );
    }

    #[test]
    fn renormalization_keeps_grid_error_within_eta() {
        // when every cluster's grid guarantee holds, the renormalized
        // estimate stays within eta of the truth entrywise; geometric point
        // spacing keeps gamma large relative to the center sampling error
        use crate::core::{distance, gamma_of, lloyd_fuzzy, LloydInit};
        let mut points = Vec::new();
        for c in [0.0, 100.0] {
            for i in 0..10 {
                points.push(vec![c + 0.1 * (1 << i) as f64]);
            }
        }
        let x = Dataset::new(points).unwrap();
        let out = lloyd_fuzzy(
            &x,
            2,
            2.0,
            LloydInit::Centers(vec![vec![10.0], vec![110.0]]),
            500,
            1e-14,
        )
        .unwrap();
        let centers = out.clustering.centers().to_vec();
        let u = update_memberships(&x, &centers, 2.0).unwrap();
        let gamma = gamma_of(&x, &centers);
        let mut o = exact_oracle(&u);
        let cfg = SolverConfig {
            m: 2000,
            eta: 0.125,
            seed: 11,
            ..Default::default()
        };
        let res = two_phase_solve(&x, &mut o, 2, &cfg).unwrap();
        for (mu_hat, mu) in res.estimate.centers().iter().zip(&centers) {
            assert!(
                distance(mu_hat, mu) <= gamma,
                "precondition: estimate within gamma"
            );
        }
        for i in 0..x.len() {
            for j in 0..2 {
                let diff = (res.estimate.memberships().get(i, j) - u.get(i, j)).abs();
                assert!(diff <= cfg.eta + 1e-12, "({i},{j}): diff {diff}");
            }
        }
    }
}
