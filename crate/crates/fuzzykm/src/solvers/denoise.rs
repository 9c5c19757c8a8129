//! Median-of-means denoising for noisy membership oracles.
//!
//! A noisy oracle answers `U[i][j] + zeta` with independent zero-mean noise of
//! variance `sigma^2`. Each logical query is answered by `B = ceil(6 log2 n)`
//! batches of `T = ceil(4 sigma^2 / kappa^2)` fresh noisy queries; the median
//! of the batch means is within `kappa` of the true value except with
//! probability at most `2 / n^3`. Wrapping a noiseless solver with this
//! adapter yields the composite noisy-oracle solver at a fixed per-query cost
//! of `B * T` ledger increments.

use super::{MembershipQuerier, SolverError};
use crate::oracle::{OracleError, QueryLedger};

#[derive(Debug)]
pub struct DenoisedOracle<O: MembershipQuerier> {
    inner: O,
    batches: usize,
    per_batch: usize,
}

impl<O: MembershipQuerier> DenoisedOracle<O> {
    /// Standard construction from the noise level `sigma`, target accuracy
    /// `kappa`, and dataset size `n`.
    pub fn new(inner: O, sigma: f64, kappa: f64, n: usize) -> Result<Self, SolverError> {
        if !(sigma > 0.0) {
            return Err(SolverError::Invalid("sigma must be positive".into()));
        }
        if !(kappa > 0.0) {
            return Err(SolverError::Invalid("kappa must be positive".into()));
        }
        if n < 2 {
            return Err(SolverError::Invalid("n must be at least 2".into()));
        }
        let batches = (6.0 * (n as f64).log2()).ceil() as usize;
        let per_batch = (4.0 * sigma * sigma / (kappa * kappa)).ceil() as usize;
        Ok(Self {
            inner,
            batches,
            per_batch,
        })
    }

    /// Explicit batch geometry; `(1, 1)` reproduces the raw oracle (the
    /// sigma -> 0 limit).
    pub fn with_batches(inner: O, batches: usize, per_batch: usize) -> Self {
        assert!(batches >= 1 && per_batch >= 1);
        Self {
            inner,
            batches,
            per_batch,
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// Physical queries spent per logical membership query.
    pub fn per_call_cost(&self) -> u64 {
        (self.batches * self.per_batch) as u64
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn per_batch(&self) -> usize {
        self.per_batch
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl DenoisedOracle<crate::oracle::TargetOracle> {
    /// Builds the adapter around a noisy target oracle, reading the noise
    /// level from the oracle itself.
    pub fn from_target(
        noisy: crate::oracle::TargetOracle,
        kappa: f64,
        n: usize,
    ) -> Result<Self, SolverError> {
        let sigma = noisy.noise_sigma();
        Self::new(noisy, sigma, kappa, n)
    }
}

impl<O: MembershipQuerier> MembershipQuerier for DenoisedOracle<O> {
    fn query(&mut self, i: usize, j: usize) -> Result<f64, OracleError> {
        let mut means = Vec::with_capacity(self.batches);
        for _ in 0..self.batches {
            let mut acc = 0.0;
            for _ in 0..self.per_batch {
                acc += self.inner.query(i, j)?;
            }
            means.push(acc / self.per_batch as f64);
        }
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = means.len() / 2;
        Ok(if means.len() % 2 == 1 {
            means[mid]
        } else {
            0.5 * (means[mid - 1] + means[mid])
        })
    }

    fn ledger_snapshot(&self) -> QueryLedger {
        self.inner.ledger_snapshot()
    }
}
