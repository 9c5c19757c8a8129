//! Query-efficient fuzzy k-means against a simulated membership/similarity oracle.
//!
//! The crate is organized around five pieces:
//!
//! - [`core`]: the fuzzy k-means mathematics — objective, alternating updates,
//!   Xie–Beni validity index, the structural quantities `beta` (normalized
//!   smallest cluster mass) and `gamma` (largest center perturbation that
//!   preserves all distance orderings), and consistency checks.
//! - [`oracle`]: a hidden target clustering answering membership, pairwise- and
//!   triplet-similarity queries, with exact query accounting and optional
//!   additive noise.
//! - [`solvers`]: the query algorithms — two-phase center-then-grid recovery,
//!   the sequential bin-sampling solver, the two-cluster adaptive-bin solver,
//!   and a median-of-means denoising wrapper for noisy oracles.
//! - [`reduction`]: simulating membership queries from similarity queries via
//!   pure-anchor detection or third-order moment tensors and Jennrich's
//!   decomposition.
//! - [`harness`]: synthetic data generation, CSV ingestion, target
//!   construction, evaluation metrics with optimal center matching, and the
//!   sweep runner behind the CLI.
//!
//! All indices are 0-based. Memberships are row-stochastic `n x k` matrices;
//! solver estimates may transiently leave `[0, 1]` by at most the grid width
//! (see `SolverResult::clamped`).

pub mod core;
pub mod harness;
pub mod oracle;
pub mod reduction;
pub mod solvers;

pub use crate::core::{
    beta_of, fuzzy_objective, gamma_of, is_consistent_center_based, lloyd_fuzzy, sort_by_distance,
    update_centers, update_memberships, xie_beni, Clustering, CoreError, Dataset, LloydInit,
    LloydOutcome, MembershipMatrix, SolverConfig,
};
pub use crate::oracle::{NoiseModel, OracleError, QueryBudget, QueryLedger, TargetOracle};
pub use crate::solvers::{MembershipQuerier, SolverError, SolverResult};
