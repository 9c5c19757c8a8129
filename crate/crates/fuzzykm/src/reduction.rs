//! Simulating membership queries with similarity queries.
//!
//! Membership rows live on the k-simplex, so knowing the rows of k elements
//! whose rows form an invertible basis turns every further membership query
//! into k pairwise-similarity queries plus a linear solve. Two bootstrap
//! paths produce such a basis:
//!
//! - Pure anchors: k candidates whose pairwise similarities are all exactly
//!   zero must be one-hot rows of k distinct clusters (disjoint supports
//!   covering k clusters force purity), giving the identity basis without
//!   ever querying a self-pair.
//! - Moment tensor: triplet queries over k sampled anchors reveal the
//!   symmetric third-order tensor `sum_r v_r (x) v_r (x) v_r` of the basis
//!   columns, which Jennrich's simultaneous-diagonalization recovers up to
//!   column permutation whenever the basis is full rank.
//!
//! Recovered cluster labels are anchor-ordered: a column permutation of the
//! target's own labels, the only ambiguity similarity queries leave.

use crate::core::CoreError;
use crate::oracle::{OracleError, QueryLedger, TargetOracle};
use crate::solvers::MembershipQuerier;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("need at least {need} candidates, got {got}")]
    NotEnoughCandidates { need: usize, got: usize },
    #[error("anchor basis is numerically singular (condition number {0:.3e})")]
    SingularBasis(f64),
    #[error("tensor slice has rank below the requested {0}")]
    RankDeficient(usize),
    #[error("tensor decomposition failed: {0}")]
    DecompositionFailure(String),
    #[error("repeated-index triplet queries are disabled but the tensor diagonal needs them")]
    RepeatsUnavailable,
    #[error("no anchor basis could be bootstrapped from either path")]
    Unavailable,
}

/// A set of anchor elements whose membership rows form a basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSet {
    /// Element indices of the anchors.
    pub indices: Vec<usize>,
    /// Anchor membership rows (k x k), in anchor-ordered cluster labels.
    pub basis: Vec<Vec<f64>>,
    /// Whether the basis is the identity (pure anchors).
    pub is_pure: bool,
    /// Spectral condition number of the basis.
    pub condition_number: f64,
}

/// A membership row recovered from pairwise similarities.
#[derive(Debug, Clone)]
pub struct RecoveredRow {
    pub values: Vec<f64>,
    /// Distance of the raw solution from the simplex, `|sum - 1| + clamp overflow`.
    pub residual: f64,
    /// Whether clamping and renormalization were applied.
    pub renormalized: bool,
}

fn condition_number(b: &DMatrix<f64>) -> f64 {
    let sv = b.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Backtracking search for a k-clique in the zero-similarity graph.
fn find_zero_clique(adj: &[Vec<bool>], k: usize) -> Option<Vec<usize>> {
    fn extend(adj: &[Vec<bool>], k: usize, start: usize, cur: &mut Vec<usize>) -> bool {
        if cur.len() == k {
            return true;
        }
        for v in start..adj.len() {
            if cur.iter().all(|&u| adj[u][v]) {
                cur.push(v);
                if extend(adj, k, v + 1, cur) {
                    return true;
                }
                cur.pop();
            }
        }
        false
    }
    let mut cur = Vec::with_capacity(k);
    extend(adj, k, 0, &mut cur).then_some(cur)
}

/// Searches the candidate pool for k elements that are certifiably pure, one
/// per cluster: their pairwise similarities must all be exactly zero, which
/// on the simplex forces one-hot rows of k distinct clusters. Never queries a
/// self-pair. Costs one pairwise query per candidate pair, plus k for the
/// confirming row-solve check when a spare candidate exists.
pub fn find_pure_anchors(
    oracle: &mut TargetOracle,
    candidates: &[usize],
    k: usize,
) -> Result<Option<AnchorSet>, ReductionError> {
    if candidates.len() < k {
        return Err(ReductionError::NotEnoughCandidates {
            need: k,
            got: candidates.len(),
        });
    }
    let m = candidates.len();
    let mut zero = vec![vec![false; m]; m];
    for a in 0..m {
        for b in (a + 1)..m {
            let s = oracle.pair_similarity(candidates[a], candidates[b])?;
            zero[a][b] = s == 0.0;
            zero[b][a] = zero[a][b];
        }
    }
    let Some(clique) = find_zero_clique(&zero, k) else {
        return Ok(None);
    };
    let indices: Vec<usize> = clique.iter().map(|&a| candidates[a]).collect();
    // confirming check: a held-out row read off against a pure basis must
    // land back on the simplex
    if let Some(&probe) = candidates.iter().find(|c| !indices.contains(c)) {
        let mut total = 0.0;
        for &a in &indices {
            total += oracle.pair_similarity(probe, a)?;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Ok(None);
        }
    }
    let basis: Vec<Vec<f64>> = (0..k)
        .map(|t| (0..k).map(|c| if c == t { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(Some(AnchorSet {
        indices,
        basis,
        is_pure: true,
        condition_number: 1.0,
    }))
}

/// Reads off one element's membership row with k pairwise queries against the
/// anchors and a solve against the anchor basis; pure bases skip the solve.
pub fn membership_from_pairwise(
    oracle: &mut TargetOracle,
    anchors: &AnchorSet,
    i: usize,
) -> Result<RecoveredRow, ReductionError> {
    if anchors.indices.contains(&i) {
        return Err(ReductionError::DecompositionFailure(format!(
            "element {i} is itself an anchor; read its row from the basis"
        )));
    }
    let k = anchors.indices.len();
    let mut sims = Vec::with_capacity(k);
    for &a in &anchors.indices {
        sims.push(oracle.pair_similarity(i, a)?);
    }
    let raw = if anchors.is_pure {
        sims
    } else {
        let b = DMatrix::from_fn(k, k, |r, c| anchors.basis[r][c]);
        let cond = condition_number(&b);
        if !cond.is_finite() || cond > 1e12 {
            return Err(ReductionError::SingularBasis(cond));
        }
        let s = DVector::from_vec(sims);
        let w = b
            .lu()
            .solve(&s)
            .ok_or(ReductionError::SingularBasis(cond))?;
        w.iter().cloned().collect()
    };
    let overflow: f64 = raw
        .iter()
        .map(|&v| (-v).max(0.0) + (v - 1.0).max(0.0))
        .sum::<f64>();
    let residual = (raw.iter().sum::<f64>() - 1.0).abs() + overflow;
    if residual > 1e-6 {
        let mut clamped: Vec<f64> = raw.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        let total: f64 = clamped.iter().sum();
        if total > 0.0 {
            clamped.iter_mut().for_each(|v| *v /= total);
        }
        Ok(RecoveredRow {
            values: clamped,
            residual,
            renormalized: true,
        })
    } else {
        Ok(RecoveredRow {
            values: raw,
            residual,
            renormalized: false,
        })
    }
}

/// A symmetric third-order tensor over the anchor set.
#[derive(Debug, Clone)]
pub struct MomentTensor {
    dim: usize,
    entries: Vec<f64>,
}

impl MomentTensor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, p: usize, q: usize, s: usize) -> f64 {
        self.entries[(p * self.dim + q) * self.dim + s]
    }

    fn set_symmetric(&mut self, p: usize, q: usize, s: usize, v: f64) {
        let d = self.dim;
        let mut idx = [p, q, s];
        idx.sort_unstable();
        let perms = [
            [idx[0], idx[1], idx[2]],
            [idx[0], idx[2], idx[1]],
            [idx[1], idx[0], idx[2]],
            [idx[1], idx[2], idx[0]],
            [idx[2], idx[0], idx[1]],
            [idx[2], idx[1], idx[0]],
        ];
        for [a, b, c] in perms {
            self.entries[(a * d + b) * d + c] = v;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Builds the rank-R tensor `sum_r c_r * v_r (x) v_r (x) v_r`.
    pub fn from_factors(dim: usize, factors: &[Vec<f64>]) -> Self {
        let mut entries = vec![0.0; dim * dim * dim];
        for f in factors {
            for p in 0..dim {
                for q in 0..dim {
                    for s in 0..dim {
                        entries[(p * dim + q) * dim + s] += f[p] * f[q] * f[s];
                    }
                }
            }
        }
        Self { dim, entries }
    }
}

/// Fills the full symmetric tensor over the anchors with one triplet query
/// per unordered index combination: `a(a+1)(a+2)/6` queries for `a` anchors.
/// Diagonal entries need repeated-index triplets.
pub fn build_moment_tensor(
    oracle: &mut TargetOracle,
    anchors: &[usize],
    allow_repeats: bool,
) -> Result<MomentTensor, ReductionError> {
    let a = anchors.len();
    let mut tensor = MomentTensor {
        dim: a,
        entries: vec![0.0; a * a * a],
    };
    for p in 0..a {
        for q in p..a {
            for s in q..a {
                let repeats = p == q || q == s;
                if repeats && !allow_repeats {
                    return Err(ReductionError::RepeatsUnavailable);
                }
                let v = oracle.triplet_similarity(anchors[p], anchors[q], anchors[s], repeats)?;
                tensor.set_symmetric(p, q, s, v);
            }
        }
    }
    Ok(tensor)
}

/// Number of distinct triplet queries [`build_moment_tensor`] issues.
pub fn moment_tensor_query_cost(anchor_count: usize) -> u64 {
    (anchor_count * (anchor_count + 1) * (anchor_count + 2) / 6) as u64
}

fn random_unit_vector(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Contracts the tensor's third mode against a vector: `sum_i w[i] * A[:,:,i]`.
fn slice_combination(a: &MomentTensor, w: &DVector<f64>) -> DMatrix<f64> {
    let d = a.dim();
    DMatrix::from_fn(d, d, |p, q| (0..d).map(|i| w[i] * a.get(p, q, i)).sum())
}

/// Eigenvectors of a real upper-triangular matrix by back-substitution.
fn triangular_eigenvector(t: &DMatrix<f64>, idx: usize) -> DVector<f64> {
    let lambda = t[(idx, idx)];
    let scale = t.amax().max(1.0);
    let mut y = DVector::zeros(t.nrows());
    y[idx] = 1.0;
    for j in (0..idx).rev() {
        let acc: f64 = ((j + 1)..=idx).map(|l| t[(j, l)] * y[l]).sum();
        let mut den = t[(j, j)] - lambda;
        if den.abs() < 1e-14 * scale {
            den = 1e-14 * scale;
        }
        y[j] = -acc / den;
    }
    y
}

/// Recovers the `rank` factor vectors of a symmetric third-order tensor by
/// simultaneous diagonalization: two random slice combinations `T1`, `T2`
/// share the factor basis, so the eigenvectors of `T1 * pinv(T2)` are the
/// factors. Eigenvectors are rescaled by the cube root of a least-squares
/// fit, sign-fixed to be entrywise nonnegative, and the reconstruction must
/// match the tensor to `1e-6` relative Frobenius error.
///
/// Rank-deficient slices or near-equal eigenvalue ratios trigger a retry with
/// fresh random vectors, five attempts in total.
pub fn jennrich_decompose(
    a: &MomentTensor,
    rank: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, ReductionError> {
    let dim = a.dim();
    if rank == 0 || rank > dim {
        return Err(ReductionError::DecompositionFailure(format!(
            "rank {rank} out of range for a {dim}-dimensional tensor"
        )));
    }
    let norm_a = a.frobenius_norm();
    if norm_a == 0.0 {
        return Err(ReductionError::DecompositionFailure("zero tensor".into()));
    }
    let mut rank_failures = 0;
    let mut last_issue = String::new();
    for _attempt in 0..5 {
        let va = random_unit_vector(dim, rng);
        let vb = random_unit_vector(dim, rng);
        let t1 = slice_combination(a, &va);
        let t2 = slice_combination(a, &vb);

        let sv1 = t1.clone().svd(false, false).singular_values;
        let smax = sv1.iter().cloned().fold(0.0, f64::max);
        let numerical_rank = sv1.iter().filter(|&&s| s > 1e-9 * smax).count();
        if numerical_rank < rank {
            rank_failures += 1;
            if rank_failures > 1 {
                return Err(ReductionError::RankDeficient(rank));
            }
            continue; // one retry with fresh vectors, as the algorithm allows
        }

        let sv2 = t2.clone().svd(true, true);
        let s2max = sv2.singular_values.iter().cloned().fold(0.0, f64::max);
        let Ok(pinv) = sv2.pseudo_inverse(1e-10 * s2max.max(1e-300)) else {
            last_issue = "pseudo-inverse failed".into();
            continue;
        };
        let m = &t1 * pinv;

        let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), 1e-12, 10_000) else {
            last_issue = "Schur iteration did not converge".into();
            continue;
        };
        let (qmat, tmat) = schur.unpack();
        // complex eigenvalue pairs appear as 2x2 blocks; the generic real
        // spectrum has none, so treat any as a bad draw
        let tscale = tmat.amax().max(1.0);
        if (1..dim).any(|i| tmat[(i, i - 1)].abs() > 1e-9 * tscale) {
            last_issue = "complex eigenvalue block".into();
            continue;
        }
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| tmat[(j, j)].abs().partial_cmp(&tmat[(i, i)].abs()).unwrap());
        let selected = &order[..rank];
        let gap_ok = selected.iter().enumerate().all(|(n1, &i)| {
            selected.iter().skip(n1 + 1).all(|&j| {
                (tmat[(i, i)] - tmat[(j, j)]).abs()
                    > 1e-8 * tmat[(i, i)].abs().max(tmat[(j, j)].abs()).max(1e-300)
            })
        });
        if !gap_ok {
            last_issue = "near-equal eigenvalue ratio".into();
            continue;
        }

        let mut vectors = Vec::with_capacity(rank);
        let mut contract_ok = true;
        for &i in selected {
            let y = triangular_eigenvector(&tmat, i);
            let mut v = &qmat * y;
            v /= v.norm();
            // eigenpair residual contract on the routine
            let resid = (&m * &v - tmat[(i, i)] * &v).norm();
            if resid > 1e-8 * m.amax().max(1.0) * (dim as f64) {
                contract_ok = false;
                break;
            }
            if v.sum() < 0.0 {
                v = -v;
            }
            vectors.push(v);
        }
        if !contract_ok {
            last_issue = "eigenpair residual above contract".into();
            continue;
        }

        // least-squares scales: minimize ||A - sum_r c_r v_r^(3)||
        let gram = DMatrix::from_fn(rank, rank, |r, s| vectors[r].dot(&vectors[s]).powi(3));
        let rhs = DVector::from_fn(rank, |r, _| {
            let v = &vectors[r];
            let mut acc = 0.0;
            for p in 0..dim {
                for q in 0..dim {
                    for s in 0..dim {
                        acc += a.get(p, q, s) * v[p] * v[q] * v[s];
                    }
                }
            }
            acc
        });
        let Some(scales) = gram.lu().solve(&rhs) else {
            last_issue = "singular factor Gram matrix".into();
            continue;
        };
        if scales.iter().any(|&c| c <= 0.0) {
            last_issue = "non-positive component scale".into();
            continue;
        }
        let factors: Vec<Vec<f64>> = vectors
            .iter()
            .zip(scales.iter())
            .map(|(v, &c)| {
                let s = c.cbrt();
                v.iter().map(|&e| e * s).collect()
            })
            .collect();

        if factors.iter().any(|f| f.iter().any(|&e| e < -1e-6)) {
            last_issue = "negative factor entry".into();
            continue;
        }
        let recon = MomentTensor::from_factors(dim, &factors);
        let mut err = 0.0;
        for (x, y) in recon.entries.iter().zip(&a.entries) {
            err += (x - y) * (x - y);
        }
        let err = err.sqrt();
        if err > 1e-6 * norm_a {
            last_issue = format!("reconstruction residual {err:.3e} above 1e-6 * {norm_a:.3e}");
            continue;
        }
        // with one factor per cluster the assembled anchor rows are
        // membership rows and must sum to one
        if rank == dim {
            let row_sums_ok = (0..dim)
                .all(|t| ((0..rank).map(|r| factors[r][t]).sum::<f64>() - 1.0).abs() <= 1e-6);
            if !row_sums_ok {
                last_issue = "anchor rows do not sum to one".into();
                continue;
            }
        }
        return Ok(factors);
    }
    Err(ReductionError::DecompositionFailure(format!(
        "out of retries: {last_issue}"
    )))
}

/// Tuning for the similarity-oracle bootstrap.
#[derive(Debug, Clone)]
pub struct SimilarityParams {
    /// Candidate pool size for the pure-anchor search.
    pub candidate_pool: usize,
    /// Fresh anchor draws for the tensor path before giving up.
    pub max_bootstrap_attempts: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            candidate_pool: 24,
            max_bootstrap_attempts: 4,
        }
    }
}

/// Which bootstrap path produced the anchor basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapPath {
    PureAnchors,
    MomentTensor,
}

/// A membership oracle simulated from similarity queries.
///
/// Serving a membership query for a new element costs exactly k pairwise
/// queries; rows are cached, so repeated queries about the same element are
/// free. Cluster labels are anchor-ordered (a fixed permutation of the
/// target's labels).
pub struct SimilarityMembershipOracle {
    oracle: TargetOracle,
    anchors: AnchorSet,
    path: BootstrapPath,
    cache: HashMap<usize, Vec<f64>>,
    bootstrap_pairs: u64,
    bootstrap_triplets: u64,
    renormalized_rows: u64,
}

impl SimilarityMembershipOracle {
    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn path(&self) -> BootstrapPath {
        self.path
    }

    /// Pairwise/triplet queries spent before the first membership was served.
    pub fn bootstrap_cost(&self) -> (u64, u64) {
        (self.bootstrap_pairs, self.bootstrap_triplets)
    }

    pub fn rows_served(&self) -> u64 {
        self.cache.len() as u64
    }

    /// Rows whose recovered solution needed clamping back to the simplex.
    pub fn renormalized_rows(&self) -> u64 {
        self.renormalized_rows
    }

    pub fn into_inner(self) -> TargetOracle {
        self.oracle
    }

    fn row(&mut self, i: usize) -> Result<&Vec<f64>, OracleError> {
        if !self.cache.contains_key(&i) {
            if let Some(t) = self.anchors.indices.iter().position(|&a| a == i) {
                let row = self.anchors.basis[t].clone();
                self.cache.insert(i, row);
            } else {
                let rec =
                    membership_from_pairwise(&mut self.oracle, &self.anchors, i).map_err(|e| {
                        match e {
                            ReductionError::Oracle(o) => o,
                            other => OracleError::InvalidQuery(other.to_string()),
                        }
                    })?;
                if rec.renormalized {
                    self.renormalized_rows += 1;
                }
                self.cache.insert(i, rec.values);
            }
        }
        Ok(self.cache.get(&i).expect("row just inserted"))
    }
}

impl MembershipQuerier for SimilarityMembershipOracle {
    fn query(&mut self, i: usize, j: usize) -> Result<f64, OracleError> {
        let k = self.anchors.indices.len();
        if j >= k {
            return Err(OracleError::IndexOutOfRange(format!("j = {j}, k = {k}")));
        }
        Ok(self.row(i)?[j])
    }

    fn ledger_snapshot(&self) -> QueryLedger {
        self.oracle.ledger().snapshot()
    }
}

/// Bootstraps an anchor basis from similarity queries and returns an adapter
/// serving membership queries. Tries the pure-anchor path over a sampled
/// candidate pool first, then falls back to sampling k anchors, building
/// their moment tensor (`O(k^3)` triplets), and decomposing it.
pub fn membership_oracle_from_similarity(
    mut oracle: TargetOracle,
    k: usize,
    params: &SimilarityParams,
    rng: &mut impl Rng,
) -> Result<SimilarityMembershipOracle, ReductionError> {
    let n = oracle.n();
    if k == 0 || k > n {
        return Err(ReductionError::NotEnoughCandidates { need: k, got: n });
    }
    let pool_size = params.candidate_pool.clamp(k, n);
    let pool = sample_distinct(n, pool_size, rng);
    let before = oracle.ledger().snapshot();

    if let Some(anchors) = find_pure_anchors(&mut oracle, &pool, k)? {
        let after = oracle.ledger().snapshot();
        return Ok(SimilarityMembershipOracle {
            oracle,
            anchors,
            path: BootstrapPath::PureAnchors,
            cache: HashMap::new(),
            bootstrap_pairs: after.pair_count - before.pair_count,
            bootstrap_triplets: 0,
            renormalized_rows: 0,
        });
    }

    for _ in 0..params.max_bootstrap_attempts {
        let indices = sample_distinct(n, k, rng);
        let tensor = build_moment_tensor(&mut oracle, &indices, true)?;
        match jennrich_decompose(&tensor, k, rng) {
            Ok(columns) => {
                // columns[r][t] is anchor t's weight in recovered cluster r
                let basis: Vec<Vec<f64>> = (0..k)
                    .map(|t| (0..k).map(|r| columns[r][t].clamp(0.0, 1.0)).collect())
                    .collect();
                let b = DMatrix::from_fn(k, k, |r, c| basis[r][c]);
                let cond = condition_number(&b);
                if !cond.is_finite() || cond > 1e10 {
                    continue; // badly conditioned anchors; draw fresh ones
                }
                let after = oracle.ledger().snapshot();
                return Ok(SimilarityMembershipOracle {
                    oracle,
                    anchors: AnchorSet {
                        indices,
                        basis,
                        is_pure: false,
                        condition_number: cond,
                    },
                    path: BootstrapPath::MomentTensor,
                    cache: HashMap::new(),
                    bootstrap_pairs: after.pair_count - before.pair_count,
                    bootstrap_triplets: after.triplet_count - before.triplet_count,
                    renormalized_rows: 0,
                });
            }
            Err(ReductionError::Oracle(e)) => return Err(ReductionError::Oracle(e)),
            Err(_) => continue,
        }
    }
    Err(ReductionError::Unavailable)
}

fn sample_distinct(n: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let i = rng.random_range(0..n);
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Clustering, MembershipMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle_from_rows(rows: Vec<Vec<f64>>) -> TargetOracle {
        let k = rows[0].len();
        let u = MembershipMatrix::new(rows).unwrap();
        let centers = (0..k).map(|j| vec![j as f64]).collect();
        TargetOracle::non_strict(Clustering::new(centers, u).unwrap(), 0)
    }

    fn random_simplex_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
                r
            })
            .collect()
    }

    #[test]
    fn pure_anchors_found_among_mixed_candidates() {
        let rows = vec![
            vec![0.4, 0.3, 0.3],
            vec![1.0, 0.0, 0.0],
            vec![0.2, 0.5, 0.3],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.6, 0.2, 0.2],
        ];
        let mut o = oracle_from_rows(rows);
        let candidates: Vec<usize> = (0..6).collect();
        let a = find_pure_anchors(&mut o, &candidates, 3).unwrap().unwrap();
        let mut got = a.indices.clone();
        got.sort_unstable();
        assert_eq!(got, vec![1, 3, 4]);
        assert!(a.is_pure);
    }

    #[test]
    fn all_mixed_candidates_yield_not_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_simplex_rows(&mut rng, 8, 3);
        let mut o = oracle_from_rows(rows);
        let candidates: Vec<usize> = (0..8).collect();
        assert!(find_pure_anchors(&mut o, &candidates, 3).unwrap().is_none());
    }

    #[test]
    fn pure_path_succeeds_whp_with_enough_candidates() {
        // pool of rho^-1 * log(nk) candidates from a target with a pure
        // fraction of rho PER CLUSTER: Monte-Carlo over seeds
        let rho = 0.25;
        let n = 120;
        let k = 3;
        let pool = ((1.0 / rho) * ((n * k) as f64).ln()).ceil() as usize;
        let pure_per_cluster = (rho * n as f64) as usize; // 30 each, 90 total
        let mut successes = 0;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    if i < k * pure_per_cluster {
                        let c = i % k;
                        (0..k).map(|j| if j == c { 1.0 } else { 0.0 }).collect()
                    } else {
                        let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
                        let s: f64 = r.iter().sum();
                        r.iter_mut().for_each(|v| *v /= s);
                        r
                    }
                })
                .collect();
            let mut o = oracle_from_rows(rows);
            let candidates = sample_distinct(n, pool.min(n), &mut rng);
            if find_pure_anchors(&mut o, &candidates, k).unwrap().is_some() {
                successes += 1;
            }
        }
        assert!(
            successes >= 48,
            "pure path found anchors in only {successes}/50 seeds"
        );
    }

    #[test]
    fn pairwise_readout_is_exact_for_pure_anchors() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.3, 0.7],
            vec![0.25, 0.75],
            vec![1.0, 0.0], // duplicate of anchor 0's row, different element
        ];
        let mut o = oracle_from_rows(rows);
        let anchors = find_pure_anchors(&mut o, &[0, 1, 2], 2).unwrap().unwrap();
        let rec = membership_from_pairwise(&mut o, &anchors, 3).unwrap();
        // anchor order may permute the clusters; compare as a set
        let mut got = rec.values.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![0.25, 0.75]);
        assert!(!rec.renormalized);
        // an element duplicating an anchor's row recovers that row
        let dup = membership_from_pairwise(&mut o, &anchors, 4).unwrap();
        let mut dup_sorted = dup.values.clone();
        dup_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(dup_sorted, vec![0.0, 1.0]);
    }

    #[test]
    fn pairwise_readout_inverts_a_full_rank_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = random_simplex_rows(&mut rng, 6, 4);
        let hidden = vec![0.1, 0.2, 0.3, 0.4];
        rows.push(hidden.clone());
        let basis: Vec<Vec<f64>> = rows[..4].to_vec();
        let mut o = oracle_from_rows(rows);
        let anchors = AnchorSet {
            indices: vec![0, 1, 2, 3],
            basis,
            is_pure: false,
            condition_number: 1.0,
        };
        let rec = membership_from_pairwise(&mut o, &anchors, 6).unwrap();
        for (got, want) in rec.values.iter().zip(&hidden) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn moment_tensor_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = random_simplex_rows(&mut rng, 5, 3);
        let v = rows.clone();
        let mut o = oracle_from_rows(rows);
        let anchors = vec![0, 2, 3, 4];
        let t = build_moment_tensor(&mut o, &anchors, true).unwrap();
        for p in 0..4 {
            for q in 0..4 {
                for s in 0..4 {
                    let want: f64 = (0..3)
                        .map(|c| v[anchors[p]][c] * v[anchors[q]][c] * v[anchors[s]][c])
                        .sum();
                    assert!((t.get(p, q, s) - want).abs() < 1e-15);
                }
            }
        }
        assert_eq!(o.ledger().triplet_count, moment_tensor_query_cost(4));
    }

    #[test]
    fn moment_tensor_respects_the_repeats_capability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = random_simplex_rows(&mut rng, 5, 2);
        let mut o = oracle_from_rows(rows);
        assert!(matches!(
            build_moment_tensor(&mut o, &[0, 1, 2], false),
            Err(ReductionError::RepeatsUnavailable)
        ));
    }

    #[test]
    fn single_cluster_tensor_is_all_ones() {
        let rows = vec![vec![1.0]; 4];
        let mut o = oracle_from_rows(rows);
        let t = build_moment_tensor(&mut o, &[0, 1, 2], true).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                for s in 0..3 {
                    assert_eq!(t.get(p, q, s), 1.0);
                }
            }
        }
    }

    #[test]
    fn tensor_of_two_pure_anchors_has_two_unit_entries() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let mut o = oracle_from_rows(rows);
        let t = build_moment_tensor(&mut o, &[0, 1], true).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.get(1, 1, 1), 1.0);
        assert_eq!(t.get(0, 0, 1), 0.0);
        assert_eq!(t.get(0, 1, 1), 0.0);
    }

    #[test]
    fn jennrich_rank_one() {
        let z = vec![0.5, 0.5];
        let a = MomentTensor::from_factors(2, std::slice::from_ref(&z));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let got = jennrich_decompose(&a, 1, &mut rng).unwrap();
        for (g, w) in got[0].iter().zip(&z) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn jennrich_identity_recovers_basis_vectors() {
        let a = MomentTensor::from_factors(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut got = jennrich_decompose(&a, 2, &mut rng).unwrap();
        got.sort_by(|x, y| y[0].partial_cmp(&x[0]).unwrap());
        assert!((got[0][0] - 1.0).abs() < 1e-8 && got[0][1].abs() < 1e-8);
        assert!(got[1][0].abs() < 1e-8 && (got[1][1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn jennrich_recovers_random_simplex_columns_up_to_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = 4;
        let rows = random_simplex_rows(&mut rng, k, k);
        // columns of the anchor matrix
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|c| (0..k).map(|t| rows[t][c]).collect())
            .collect();
        let a = MomentTensor::from_factors(k, &cols);
        let got = jennrich_decompose(&a, k, &mut rng).unwrap();
        // match each recovered column to its closest true column
        let mut used = vec![false; k];
        for g in &got {
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, col) in cols.iter().enumerate() {
                if used[c] {
                    continue;
                }
                let d: f64 = g
                    .iter()
                    .zip(col)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if d < best.0 {
                    best = (d, c);
                }
            }
            assert!(
                best.0 < 1e-6,
                "no true column within 1e-6 (closest {})",
                best.0
            );
            used[best.1] = true;
        }
    }

    #[test]
    fn adapter_matches_the_true_membership_oracle() {
        // abundant pure elements (every even index): the pure path answers exactly
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for i in 0..30usize {
            if i % 2 == 0 {
                let c = (i / 2) % 3;
                rows.push((0..3).map(|j| if j == c { 1.0 } else { 0.0 }).collect());
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                let mut r: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
                rows.push(r);
            }
        }
        let truth = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut adapter = membership_oracle_from_similarity(
            oracle_from_rows(rows),
            3,
            &SimilarityParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(adapter.path(), BootstrapPath::PureAnchors);
        // the adapter's labels are a fixed permutation of the target's:
        // recover it from the anchors themselves
        let perm: Vec<usize> = adapter
            .anchors()
            .indices
            .iter()
            .map(|&a| truth[a].iter().position(|&v| v == 1.0).unwrap())
            .collect();
        let (pairs_before, _) = adapter.bootstrap_cost();
        let before = adapter.ledger_snapshot().pair_count;
        assert_eq!(before, pairs_before);
        // odd indices are mixed, so none of these can be an anchor
        for i in [1usize, 5, 7, 1, 5] {
            for t in 0..3 {
                let got = adapter.query(i, t).unwrap();
                assert_eq!(got, truth[i][perm[t]], "row {i} cluster {t}");
            }
        }
        // row caching: 3 distinct non-anchor rows at k pair queries each
        let after = adapter.ledger_snapshot().pair_count;
        assert_eq!(after - before, 3 * 3);
    }

    #[test]
    fn adapter_falls_back_to_the_tensor_path_without_pure_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows = random_simplex_rows(&mut rng, 40, 3);
        let truth = rows.clone();
        let mut adapter = membership_oracle_from_similarity(
            oracle_from_rows(rows),
            3,
            &SimilarityParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(adapter.path(), BootstrapPath::MomentTensor);
        // recovered labels are a permutation; identify it via one row and
        // verify the rest under it
        let probe = 7usize;
        let got_row: Vec<f64> = (0..3).map(|t| adapter.query(probe, t).unwrap()).collect();
        let mut perm = [usize::MAX; 3];
        for (t, g) in got_row.iter().enumerate() {
            let c = (0..3)
                .min_by(|&a, &b| {
                    (truth[probe][a] - g)
                        .abs()
                        .partial_cmp(&(truth[probe][b] - g).abs())
                        .unwrap()
                })
                .unwrap();
            perm[t] = c;
        }
        for i in [0usize, 11, 23, 39] {
            for t in 0..3 {
                let got = adapter.query(i, t).unwrap();
                let want = truth[i][perm[t]];
                assert!((got - want).abs() < 1e-6, "row {i}: {got} vs {want}");
            }
        }
    }
}
