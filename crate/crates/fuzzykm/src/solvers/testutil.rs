//! Test doubles shared by the solver test modules.

use super::MembershipQuerier;
use crate::core::MembershipMatrix;
use crate::oracle::{OracleError, QueryLedger};

/// Answers membership queries from a fixed matrix and counts them.
pub(crate) struct VecOracle {
    pub rows: Vec<Vec<f64>>,
    pub ledger: QueryLedger,
}

impl VecOracle {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self {
            rows,
            ledger: QueryLedger::default(),
        }
    }

    /// Single-cluster oracle over one membership column.
    pub fn from_column(col: &[f64]) -> Self {
        Self::new(col.iter().map(|&v| vec![v]).collect())
    }
}

impl MembershipQuerier for VecOracle {
    fn query(&mut self, i: usize, j: usize) -> Result<f64, OracleError> {
        self.ledger.membership_count += 1;
        Ok(self.rows[i][j])
    }

    fn ledger_snapshot(&self) -> QueryLedger {
        self.ledger.clone()
    }
}

pub(crate) fn exact_oracle(u: &MembershipMatrix) -> VecOracle {
    VecOracle::new(u.rows().to_vec())
}
