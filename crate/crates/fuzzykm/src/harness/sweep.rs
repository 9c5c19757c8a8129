//! Declarative parameter sweeps emitting one JSONL record per run.
//!
//! A sweep config names a dataset (synthetic family or CSV), a target
//! construction, and per-solver parameter grids. Every (grid point, trial)
//! pair becomes one isolated run with its own oracle and RNG substream
//! derived from the mandatory master seed, so records are reproducible
//! independent of scheduling. Aggregation is a separate pass over the raw
//! records.

use super::{
    build_target, evaluate, generate_synthetic, load_csv, BuiltTarget, EvalReport, HarnessError,
    SyntheticSpec, TargetMode,
};
use crate::core::{beta_of, Dataset, SolverConfig};
use crate::oracle::TargetOracle;
use crate::solvers::{
    sequential_solve, sequential_eta1_max, two_cluster_solve, two_phase_solve, SolverResult,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    TwoPhase,
    Sequential,
    TwoCluster,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::TwoPhase => "two-phase",
            SolverKind::Sequential => "sequential",
            SolverKind::TwoCluster => "two-cluster",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// The synthetic family: cluster 1 has `l1` points, the rest `l1 * zeta`,
    /// one dataset per listed zeta.
    Synthetic {
        k: usize,
        d: usize,
        l1: usize,
        zeta: Vec<f64>,
        #[serde(default = "default_separation")]
        center_separation: f64,
        #[serde(default = "default_std")]
        point_std: f64,
        #[serde(default)]
        separate_first_only: bool,
    },
    Csv {
        path: String,
        label_column: Option<String>,
    },
}

fn default_separation() -> f64 {
    1000.0
}

fn default_std() -> f64 {
    20.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    pub mode: TargetMode,
    pub alpha: f64,
    /// Number of clusters; for CSV datasets with labels it may be omitted
    /// (defaults to the label count).
    pub k: Option<usize>,
}

/// One solver block: the cartesian product of its parameter lists.
///
/// With `zip_r`, the `r` list is paired elementwise with the `m` list
/// instead of crossed with it (the "r = m/eta1" style protocols).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverGrid {
    pub name: SolverKind,
    pub m: Vec<usize>,
    #[serde(default = "one_usize")]
    pub r: Vec<usize>,
    #[serde(default)]
    pub zip_r: bool,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta1: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta2: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl SolverGrid {
    /// The (m, r) combinations this block expands to.
    fn m_r_pairs(&self) -> Vec<(usize, usize)> {
        if self.zip_r {
            self.m.iter().zip(&self.r).map(|(&m, &r)| (m, r)).collect()
        } else {
            self.m
                .iter()
                .flat_map(|&m| self.r.iter().map(move |&r| (m, r)))
                .collect()
        }
    }
}

fn one_usize() -> Vec<usize> {
    vec![1]
}

fn default_eta() -> Vec<f64> {
    vec![0.1]
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub trials: usize,
    pub dataset: DatasetSpec,
    pub target: TargetSpec,
    pub solvers: Vec<SolverGrid>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.schema_version != 1 {
            return Err(HarnessError::Config(format!(
                "unsupported sweep schema version {}",
                cfg.schema_version
            )));
        }
        if cfg.trials == 0 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        if cfg.solvers.is_empty() {
            return Err(HarnessError::Config(
                "at least one solver block required".into(),
            ));
        }
        for block in &cfg.solvers {
            if block.zip_r && block.r.len() != block.m.len() {
                return Err(HarnessError::Config(format!(
                    "solver {}: zip_r needs r and m lists of equal length ({} vs {})",
                    block.name.as_str(),
                    block.r.len(),
                    block.m.len()
                )));
            }
        }
        Ok(cfg)
    }
}

/// One run's outcome; failures carry the error text instead of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub solver: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub zeta: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub r: usize,
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub trial: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    pub duration_ms: u64,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct PreparedDataset {
    zeta: Option<f64>,
    dataset: Arc<Dataset>,
    labels: Option<Arc<Vec<usize>>>,
    target: Arc<BuiltTarget>,
    k: usize,
}

fn prepare_datasets(cfg: &SweepConfig) -> Result<Vec<PreparedDataset>, HarnessError> {
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            k,
            d,
            l1,
            zeta,
            center_separation,
            point_std,
            separate_first_only,
        } => zeta
            .iter()
            .map(|&z| {
                let mut spec =
                    SyntheticSpec::with_zeta(*k, *d, *l1, z, mix(cfg.master_seed, z.to_bits()));
                spec.center_separation = *center_separation;
                spec.point_std = *point_std;
                spec.separate_first_only = *separate_first_only;
                let (x, labels) = generate_synthetic(&spec)?;
                let kk = cfg.target.k.unwrap_or(*k);
                let target = build_target(
                    &x,
                    kk,
                    cfg.target.alpha,
                    cfg.target.mode,
                    Some(&labels),
                    mix(cfg.master_seed, 0x7a67),
                )?;
                Ok(PreparedDataset {
                    zeta: Some(z),
                    dataset: Arc::new(x),
                    labels: Some(Arc::new(labels)),
                    target: Arc::new(target),
                    k: kk,
                })
            })
            .collect(),
        DatasetSpec::Csv { path, label_column } => {
            let (x, labels) = load_csv(std::path::Path::new(path), label_column.as_deref())?;
            let k = match (cfg.target.k, &labels) {
                (Some(k), _) => k,
                (None, Some(ls)) => super::label_count(ls),
                (None, None) => {
                    return Err(HarnessError::Config(
                        "target.k required when the dataset has no labels".into(),
                    ))
                }
            };
            let target = build_target(
                &x,
                k,
                cfg.target.alpha,
                cfg.target.mode,
                labels.as_deref(),
                mix(cfg.master_seed, 0x7a67),
            )?;
            Ok(vec![PreparedDataset {
                zeta: None,
                dataset: Arc::new(x),
                labels: labels.map(Arc::new),
                target: Arc::new(target),
                k,
            }])
        }
    }
}

struct PlannedRun {
    dataset_idx: usize,
    solver: SolverKind,
    cfg: SolverConfig,
    trial: usize,
}

/// Runs the whole sweep; records come back in deterministic plan order
/// regardless of how the runs were scheduled.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let datasets = prepare_datasets(cfg)?;
    let mut plan = Vec::new();
    for (dataset_idx, _) in datasets.iter().enumerate() {
        for (block_idx, block) in cfg.solvers.iter().enumerate() {
            let mut grid_idx = 0u64;
            for (m, r) in block.m_r_pairs() {
                for &eta in &block.eta {
                    for &eta1 in &block.eta1 {
                        for &eta2 in &block.eta2 {
                            for trial in 0..cfg.trials {
                                let seed = mix(
                                    cfg.master_seed,
                                    ((dataset_idx as u64) << 48)
                                        ^ ((block_idx as u64) << 40)
                                        ^ (grid_idx << 16)
                                        ^ trial as u64,
                                );
                                plan.push(PlannedRun {
                                    dataset_idx,
                                    solver: block.name,
                                    cfg: SolverConfig {
                                        alpha: cfg.target.alpha,
                                        m,
                                        r,
                                        eta,
                                        eta1,
                                        eta2,
                                        delta: block.delta,
                                        seed,
                                    },
                                    trial,
                                });
                            }
                            grid_idx += 1;
                        }
                    }
                }
            }
        }
    }
    let records: Vec<RunRecord> = plan
        .par_iter()
        .map(|run| execute_run(run, &datasets[run.dataset_idx]))
        .collect();
    Ok(records)
}

fn execute_run(run: &PlannedRun, prepared: &PreparedDataset) -> RunRecord {
    let start = std::time::Instant::now();
    let mut warnings = prepared.target.warnings.clone();
    let x = prepared.dataset.as_ref();
    let k = prepared.k;
    if run.solver == SolverKind::Sequential {
        let beta = beta_of(prepared.target.clustering.memberships());
        let cap = sequential_eta1_max(k, beta);
        if run.cfg.eta1 > cap {
            warnings.push(format!(
                "eta1 = {} exceeds the guarantee precondition (1/k)(1 - beta/k) = {cap:.4}",
                run.cfg.eta1
            ));
        }
    }
    let mut oracle = TargetOracle::non_strict(
        prepared.target.clustering.clone(),
        mix(run.cfg.seed, 0x0c1e),
    );
    let outcome: Result<SolverResult, _> = match run.solver {
        SolverKind::TwoPhase => two_phase_solve(x, &mut oracle, k, &run.cfg),
        SolverKind::Sequential => sequential_solve(x, &mut oracle, k, &run.cfg),
        SolverKind::TwoCluster => {
            if k != 2 {
                Err(crate::solvers::SolverError::Invalid(format!(
                    "the two-cluster solver needs k = 2, got {k}"
                )))
            } else {
                two_cluster_solve(x, &mut oracle, &run.cfg)
            }
        }
    };
    let (eval, error) = match outcome {
        Ok(result) => {
            match evaluate(
                &prepared.target.clustering,
                &result.estimate,
                prepared.labels.as_ref().map(|l| l.as_slice()),
                result.ledger.clone(),
            ) {
                Ok(report) => (Some(report), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        Err(e) => (None, Some(e.to_string())),
    };
    RunRecord {
        schema_version: 1,
        solver: run.solver.as_str().into(),
        zeta: prepared.zeta,
        n: x.len(),
        k,
        m: run.cfg.m,
        r: run.cfg.r,
        eta: run.cfg.eta,
        eta1: run.cfg.eta1,
        eta2: run.cfg.eta2,
        trial: run.trial,
        seed: run.cfg.seed,
        eval,
        error,
        warnings,
        duration_ms: start.elapsed().as_millis() as u64,
    }
}

pub fn write_records_jsonl<W: Write>(
    out: &mut W,
    records: &[RunRecord],
) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Per-grid-point summary over trials.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub solver: String,
    pub zeta: Option<f64>,
    pub m: usize,
    pub r: usize,
    pub eta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub runs: usize,
    pub failures: usize,
    pub center_error_mean: f64,
    pub center_error_median: f64,
    pub center_error_q25: f64,
    pub center_error_q75: f64,
    pub membership_error_median: f64,
    pub accuracy_mean: Option<f64>,
    pub queries_mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = format!(
            "{}|{:?}|{}|{}|{}|{}|{}",
            r.solver, r.zeta, r.m, r.r, r.eta, r.eta1, r.eta2
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let first = group[0];
            let mut centers: Vec<f64> = Vec::new();
            let mut memberships: Vec<f64> = Vec::new();
            let mut accuracies: Vec<f64> = Vec::new();
            let mut queries: Vec<f64> = Vec::new();
            let mut failures = 0;
            for r in &group {
                match &r.eval {
                    Some(e) => {
                        centers.push(e.center_error);
                        memberships.push(e.membership_error);
                        if let Some(a) = e.argmax_accuracy {
                            accuracies.push(a);
                        }
                        queries.push(e.queries.total() as f64);
                    }
                    None => failures += 1,
                }
            }
            centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            memberships.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            AggregateRow {
                solver: first.solver.clone(),
                zeta: first.zeta,
                m: first.m,
                r: first.r,
                eta: first.eta,
                eta1: first.eta1,
                eta2: first.eta2,
                runs: group.len(),
                failures,
                center_error_mean: mean(&centers),
                center_error_median: quantile(&centers, 0.5),
                center_error_q25: quantile(&centers, 0.25),
                center_error_q75: quantile(&centers, 0.75),
                membership_error_median: quantile(&memberships, 0.5),
                accuracy_mean: (!accuracies.is_empty()).then(|| mean(&accuracies)),
                queries_mean: mean(&queries),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "solver",
        "zeta",
        "m",
        "r",
        "eta",
        "eta1",
        "eta2",
        "runs",
        "failures",
        "center_error_mean",
        "center_error_median",
        "center_error_q25",
        "center_error_q75",
        "membership_error_median",
        "accuracy_mean",
        "queries_mean",
    ])?;
    for row in rows {
        w.write_record([
            row.solver.clone(),
            row.zeta.map(|z| z.to_string()).unwrap_or_default(),
            row.m.to_string(),
            row.r.to_string(),
            row.eta.to_string(),
            row.eta1.to_string(),
            row.eta2.to_string(),
            row.runs.to_string(),
            row.failures.to_string(),
            format!("{}", row.center_error_mean),
            format!("{}", row.center_error_median),
            format!("{}", row.center_error_q25),
            format!("{}", row.center_error_q75),
            format!("{}", row.membership_error_median),
            row.accuracy_mean.map(|a| a.to_string()).unwrap_or_default(),
            format!("{}", row.queries_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}
