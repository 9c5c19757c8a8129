//! A hidden target clustering that answers queries, with exact accounting.
//!
//! Three query types are served: membership (the weight of element `i` in
//! cluster `j`), pairwise similarity (inner product of two membership rows),
//! and triplet similarity (elementwise three-way product summed over
//! clusters). Every answered query increments the [`QueryLedger`]; budgets,
//! when set, fail the query rather than silently truncating, because query
//! counts are the quantity under study.

use crate::core::{is_consistent_center_based, Clustering, DEFAULT_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query budget exhausted for {kind} queries; ledger: {ledger:?}")]
    BudgetExhausted {
        kind: &'static str,
        ledger: QueryLedger,
    },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("target is not a consistent center-based clustering: {0}")]
    InconsistentTarget(String),
}

/// Optional per-type caps on query counts.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct QueryBudget {
    pub membership: Option<u64>,
    pub pair: Option<u64>,
    pub triplet: Option<u64>,
}

/// One answered query, kept when logging is enabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum QueryRecord {
    #[serde(rename = "mem")]
    Membership { i: usize, j: usize, ans: f64 },
    #[serde(rename = "pair")]
    Pair { p: usize, q: usize, ans: f64 },
    #[serde(rename = "trip")]
    Triplet {
        p: usize,
        q: usize,
        r: usize,
        ans: f64,
    },
}

/// Exact per-type counts of oracle calls.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QueryLedger {
    pub membership_count: u64,
    pub pair_count: u64,
    pub triplet_count: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub budget: Option<QueryBudget>,
    #[serde(skip)]
    pub log: Option<Vec<QueryRecord>>,
}

impl QueryLedger {
    pub fn total(&self) -> u64 {
        self.membership_count + self.pair_count + self.triplet_count
    }

    /// A copy without the (possibly large) log, for embedding in results.
    pub fn snapshot(&self) -> QueryLedger {
        QueryLedger {
            log: None,
            ..self.clone()
        }
    }

    fn charge_membership(&mut self) -> Result<(), OracleError> {
        if let Some(cap) = self.budget.and_then(|b| b.membership) {
            if self.membership_count >= cap {
                return Err(OracleError::BudgetExhausted {
                    kind: "membership",
                    ledger: self.snapshot(),
                });
            }
        }
        self.membership_count += 1;
        Ok(())
    }

    fn charge_pair(&mut self) -> Result<(), OracleError> {
        if let Some(cap) = self.budget.and_then(|b| b.pair) {
            if self.pair_count >= cap {
                return Err(OracleError::BudgetExhausted {
                    kind: "pair",
                    ledger: self.snapshot(),
                });
            }
        }
        self.pair_count += 1;
        Ok(())
    }

    fn charge_triplet(&mut self) -> Result<(), OracleError> {
        if let Some(cap) = self.budget.and_then(|b| b.triplet) {
            if self.triplet_count >= cap {
                return Err(OracleError::BudgetExhausted {
                    kind: "triplet",
                    ledger: self.snapshot(),
                });
            }
        }
        self.triplet_count += 1;
        Ok(())
    }

    /// Serializes the log (if enabled) as JSON lines.
    pub fn export_log_jsonl(&self) -> Option<String> {
        self.log.as_ref().map(|records| {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r).expect("query records serialize"));
                out.push('\n');
            }
            out
        })
    }
}

/// Additive noise applied to membership answers; zero-mean by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum NoiseModel {
    /// Gaussian with standard deviation `sigma`, drawn fresh per call.
    Gaussian { sigma: f64 },
    /// Uniform on `[-half_width, half_width]` (variance `half_width^2 / 3`);
    /// the bounded alternative the analysis also admits.
    Uniform { half_width: f64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { sigma } => *sigma,
            NoiseModel::Uniform { half_width } => half_width / 3f64.sqrt(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        use rand::Rng;
        match self {
            NoiseModel::Gaussian { sigma } => {
                // Box-Muller; two uniforms per call keeps the stream simple
                let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            NoiseModel::Uniform { half_width } => rng.random_range(-half_width..=*half_width),
        }
    }
}

/// A hidden clustering answering queries about itself.
///
/// One oracle instance is owned by exactly one solver run; independent runs
/// construct their own.
#[derive(Debug, Clone)]
pub struct TargetOracle {
    target: Clustering,
    noise: Option<NoiseModel>,
    rng: ChaCha8Rng,
    ledger: QueryLedger,
    strict: bool,
}

impl TargetOracle {
    /// Strict construction: the target must pass the consistency check, the
    /// mode under which the solvers' guarantees are stated.
    pub fn strict(
        x: &crate::core::Dataset,
        target: Clustering,
        alpha: f64,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let report = is_consistent_center_based(x, &target, alpha, DEFAULT_TOL);
        if !report.consistent {
            return Err(OracleError::InconsistentTarget(format!(
                "{} violation(s), first: {:?}",
                report.violations.len(),
                report.violations.first()
            )));
        }
        Ok(Self::non_strict(target, seed))
    }

    /// Non-strict construction for targets that need not satisfy the
    /// consistency conditions (hard labels on real data, crafted instances).
    pub fn non_strict(target: Clustering, seed: u64) -> Self {
        Self {
            target,
            noise: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ledger: QueryLedger::default(),
            strict: false,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_budget(mut self, budget: QueryBudget) -> Self {
        self.ledger.budget = Some(budget);
        self
    }

    pub fn with_logging(mut self) -> Self {
        self.ledger.log = Some(Vec::new());
        self
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise.map(|m| m.sigma()).unwrap_or(0.0)
    }

    pub fn n(&self) -> usize {
        self.target.memberships().n()
    }

    pub fn k(&self) -> usize {
        self.target.k()
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    /// The hidden clustering; for evaluation harnesses only, never for solvers.
    pub fn target(&self) -> &Clustering {
        &self.target
    }

    fn check_index(&self, name: &str, idx: usize, bound: usize) -> Result<(), OracleError> {
        if idx >= bound {
            return Err(OracleError::IndexOutOfRange(format!(
                "{name} = {idx}, bound {bound}"
            )));
        }
        Ok(())
    }

    /// Membership weight of element `i` in cluster `j`, plus fresh additive
    /// noise when a noise model is set. Counts one membership query.
    pub fn membership_query(&mut self, i: usize, j: usize) -> Result<f64, OracleError> {
        self.check_index("i", i, self.n())?;
        self.check_index("j", j, self.k())?;
        self.ledger.charge_membership()?;
        let mut ans = self.target.memberships().get(i, j);
        if let Some(noise) = self.noise {
            ans += noise.draw(&mut self.rng);
        }
        if let Some(log) = self.ledger.log.as_mut() {
            log.push(QueryRecord::Membership { i, j, ans });
        }
        Ok(ans)
    }

    /// Inner product of the membership rows of two distinct elements.
    pub fn pair_similarity(&mut self, p: usize, q: usize) -> Result<f64, OracleError> {
        self.check_index("p", p, self.n())?;
        self.check_index("q", q, self.n())?;
        if p == q {
            return Err(OracleError::InvalidQuery(
                "pair similarity requires two distinct instances".into(),
            ));
        }
        self.ledger.charge_pair()?;
        let u = self.target.memberships();
        let ans: f64 = (0..self.k()).map(|t| u.get(p, t) * u.get(q, t)).sum();
        if let Some(log) = self.ledger.log.as_mut() {
            log.push(QueryRecord::Pair { p, q, ans });
        }
        Ok(ans)
    }

    /// Three-way product of membership rows summed over clusters.
    ///
    /// Distinctness is required unless `allow_repeats` is set; the repeated
    /// form exists only to fill moment-tensor diagonals, which no distinct
    /// query can reach.
    pub fn triplet_similarity(
        &mut self,
        p: usize,
        q: usize,
        r: usize,
        allow_repeats: bool,
    ) -> Result<f64, OracleError> {
        self.check_index("p", p, self.n())?;
        self.check_index("q", q, self.n())?;
        self.check_index("r", r, self.n())?;
        if !allow_repeats && (p == q || q == r || p == r) {
            return Err(OracleError::InvalidQuery(
                "triplet similarity requires three distinct instances".into(),
            ));
        }
        self.ledger.charge_triplet()?;
        let u = self.target.memberships();
        let ans: f64 = (0..self.k())
            .map(|t| u.get(p, t) * u.get(q, t) * u.get(r, t))
            .sum();
        if let Some(log) = self.ledger.log.as_mut() {
            log.push(QueryRecord::Triplet { p, q, r, ans });
        }
        Ok(ans)
    }
}
