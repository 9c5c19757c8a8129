//! Query algorithms against a membership oracle.
//!
//! All solvers share the same skeleton: estimate centers from a small number
//! of membership queries, then recover every element's membership on an
//! eta-grid with binary searches along distance-sorted orders. They differ in
//! how centers of small clusters are reached:
//!
//! - [`two_phase_solve`]: non-adaptive; one uniform sample estimates all
//!   centers at once.
//! - [`sequential_solve`]: adaptive; clusters are discovered largest-first,
//!   and elements are binned by their already-estimated membership mass so
//!   that small unprocessed clusters are oversampled.
//! - [`two_cluster_solve`]: the k = 2 special case with data-dependent
//!   geometric bins; its query count does not depend on the cluster balance.
//! - [`DenoisedOracle`]: median-of-means wrapper turning a noisy oracle into
//!   an approximately clean one at a fixed per-query cost.
//!
//! Every solver records per-stage query counts from the oracle ledger; the
//! accounting is exact, not estimated.

mod center;
mod denoise;
mod grid;
mod search;
mod sequential;
#[cfg(test)]
mod testutil;
mod two_cluster;
mod two_phase;

pub use center::{estimate_center_from_samples, estimate_center_uniform};
pub use denoise::DenoisedOracle;
pub use grid::{estimate_memberships_grid, GridEstimate};
pub use search::{binary_search2, binary_search_threshold, ceil_log2, probes_per_search};
pub use sequential::{importance_weighted_mass, sequential_solve, StageBins};
pub use two_cluster::{
    membership2, two_cluster_solve, M2Bin, Membership2Outcome, Membership2Stats,
};
pub use two_phase::two_phase_solve;

use crate::core::{Clustering, CoreError, SolverConfig};
use crate::oracle::{OracleError, QueryLedger, TargetOracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("sampled membership mass for cluster {cluster} is zero; retry with a larger sample")]
    DegenerateSample { cluster: usize },
    #[error("no unprocessed membership mass found at sequential stage {stage}")]
    DegenerateStage { stage: usize },
    #[error("no second-cluster mass found; every element looks pure")]
    DegenerateSecondCluster,
    #[error("{0}")]
    Invalid(String),
}

/// Anything that can answer membership queries and report what they cost.
///
/// [`TargetOracle`] answers directly; adapters (denoising, the
/// similarity-query reduction) translate each call into one or more
/// underlying queries. `ledger_snapshot` always reflects the *physical*
/// ledger, so per-stage accounting stays truthful through adapters.
pub trait MembershipQuerier {
    fn query(&mut self, i: usize, j: usize) -> Result<f64, OracleError>;
    fn ledger_snapshot(&self) -> QueryLedger;

    /// Total physical queries of any type issued so far.
    fn queries_total(&self) -> u64 {
        self.ledger_snapshot().total()
    }
}

impl MembershipQuerier for TargetOracle {
    fn query(&mut self, i: usize, j: usize) -> Result<f64, OracleError> {
        self.membership_query(i, j)
    }

    fn ledger_snapshot(&self) -> QueryLedger {
        self.ledger().snapshot()
    }
}

/// Detail recorded by the sequential and two-cluster solvers, enough to
/// recompute their query counts in closed form after the fact.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Sequential solver: bin occupancy and draws per adaptive stage.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub stage_bins: Vec<StageBins>,
    /// Two-cluster solver: adaptive-bin statistics.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub membership2: Option<Membership2Stats>,
}

/// The output of a solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverResult {
    pub solver: String,
    pub estimate: Clustering,
    /// Physical query counts at the end of the run.
    pub ledger: QueryLedger,
    /// Ordered (stage name, physical queries spent in that stage).
    pub per_stage: Vec<(String, u64)>,
    /// Cluster discovery order; identity for non-sequential solvers.
    pub cluster_order: Vec<usize>,
    pub seed: u64,
    pub config: SolverConfig,
    pub diagnostics: SolverDiagnostics,
}

impl SolverResult {
    pub fn total_queries(&self) -> u64 {
        self.ledger.total()
    }

    /// JSON with a schema-version field; memberships above the row threshold
    /// are omitted to keep result files small.
    pub fn to_json(&self, omit_memberships_over: Option<usize>) -> serde_json::Value {
        let mut v = serde_json::json!({
            "schema_version": 1,
            "solver": self.solver,
            "seed": self.seed,
            "config": self.config,
            "centers": self.estimate.centers(),
            "memberships": self.estimate.memberships().rows(),
            "cluster_order": self.cluster_order,
            "per_stage": self.per_stage,
            "ledger": self.ledger,
            "diagnostics": self.diagnostics,
        });
        if let Some(cap) = omit_memberships_over {
            if self.estimate.memberships().n() > cap {
                v["memberships"] = serde_json::Value::Null;
            }
        }
        v
    }
}

/// Renormalizes grid estimates so each row sums to one:
/// `U[i][j] += (1 - sum_j U[i][j]) / k`.
pub(crate) fn renormalize_rows(rows: &mut [Vec<f64>]) {
    for row in rows.iter_mut() {
        let deficit = (1.0 - row.iter().sum::<f64>()) / row.len() as f64;
        for v in row.iter_mut() {
            *v += deficit;
        }
    }
}

/// Per-stage RNG substream: stage query counts cannot perturb later stages.
pub(crate) fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over (seed, stage)
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Ordered stage ledger built from before/after query totals.
pub(crate) struct StageLog {
    list: Vec<(String, u64)>,
    last: u64,
}

impl StageLog {
    pub(crate) fn new(total_now: u64) -> Self {
        Self {
            list: Vec::new(),
            last: total_now,
        }
    }

    pub(crate) fn record(&mut self, name: impl Into<String>, total_now: u64) {
        self.list.push((name.into(), total_now - self.last));
        self.last = total_now;
    }

    pub(crate) fn into_list(self) -> Vec<(String, u64)> {
        self.list
    }
}

// ---------------------------------------------------------------------------
// guarantee-shaped budgets
//
// The analysis leaves absolute constants unspecified, so none of these are
// applied automatically; they exist so harnesses can report what a chosen
// constant implies.
// ---------------------------------------------------------------------------

/// Uniform-sampling mean estimate: bound on `||mu_hat - mu||` holding with
/// probability `1 - delta`, where `y` is the smallest normalized alpha-mass
/// `min_j (1/n) sum_i U[i][j]^alpha`.
pub fn uniform_mean_error_bound(c: f64, radius: f64, y: f64, m: usize, delta: f64) -> f64 {
    let sq = 4.0 * radius * radius / (y * y) * (c / m as f64 * (1.0 / delta).ln()).sqrt();
    sq.sqrt()
}

/// Two-phase stage-one sample size making all centers `eps`-accurate.
pub fn two_phase_m_bound(
    c: f64,
    radius: f64,
    k: usize,
    alpha: f64,
    eps: f64,
    beta: f64,
    delta: f64,
) -> f64 {
    let base = radius * (k as f64).powf(alpha) / (eps * beta.powf(alpha));
    base.powi(4) * c * (k as f64 / delta).ln()
}

/// Sequential stage-one sample size (largest cluster only).
pub fn sequential_m_bound(c: f64, radius: f64, k: usize, alpha: f64, eps: f64, delta: f64) -> f64 {
    let base = radius * (k as f64).powf(alpha) / eps;
    base.powi(4) * c * (2.0 * k as f64 / delta).ln()
}

/// Sequential per-bin sample size.
pub fn sequential_r_bound(
    c: f64,
    radius: f64,
    k: usize,
    alpha: f64,
    eps: f64,
    beta: f64,
    eta1: f64,
    delta: f64,
) -> f64 {
    c * radius.powi(4) * (k as f64).powf(4.0 * alpha) / (eps.powi(4) * beta.powf(4.0 * alpha - 4.0))
        * (4.0 * k as f64 / (eta1 * delta)).ln()
}

/// Largest intermediate grid width the sequential guarantee tolerates.
pub fn sequential_eta1_max(k: usize, beta: f64) -> f64 {
    (1.0 / k as f64) * (1.0 - beta / k as f64)
}

/// Two-cluster total-query budget shape with calibrated leading constants.
pub fn two_cluster_budget_shape(
    c1: f64,
    c2: f64,
    c3: f64,
    n: usize,
    eta: f64,
    radius: f64,
    eps: f64,
    delta: f64,
) -> f64 {
    let log_n = ceil_log2(n) as f64;
    c1 * log_n * log_n
        + c2 * log_n / eta
        + c3 * (radius / eps).powi(4) * log_n * (1.0 / (eta * delta)).ln()
}
