//! Command-line front end: dataset generation, target construction, single
//! solver runs, declarative sweeps, aggregation, and evaluation.
//!
//! Exit codes: 0 on success, 2 on configuration/parse errors, 3 on runtime
//! or degenerate-solver errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fuzzykm::core::{Clustering, CoreError, MembershipMatrix, SolverConfig};
use fuzzykm::harness::{
    aggregate, build_target, evaluate, generate_synthetic, load_csv, read_records_jsonl, run_sweep,
    save_dataset_csv, write_aggregate_csv, write_records_jsonl, HarnessError, SweepConfig,
    SyntheticSpec, TargetFile, TargetMode,
};
use fuzzykm::oracle::{NoiseModel, QueryLedger, TargetOracle};
use fuzzykm::reduction::{membership_oracle_from_similarity, SimilarityParams};
use fuzzykm::solvers::{
    sequential_solve, two_cluster_solve, two_phase_solve, DenoisedOracle, MembershipQuerier,
    SolverError, SolverResult,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fuzzykm",
    version,
    about = "Query-efficient fuzzy k-means against a simulated membership/similarity oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    TwoPhase,
    Sequential,
    TwoCluster,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Lloyd,
    HardLabels,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset as headered CSV
    Generate(GenerateArgs),
    /// Build the hidden target clustering the oracle answers from
    Target(TargetArgs),
    /// Run one solver against an oracle over a dataset + target
    Solve(SolveArgs),
    /// Evaluate a solver result against the target
    Evaluate(EvaluateArgs),
    /// Run a declarative sweep config, emitting one JSONL record per run
    Sweep(SweepArgs),
    /// Aggregate sweep records into a plot-ready CSV summary
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of clusters
    #[arg(long)]
    k: usize,
    /// Dimension
    #[arg(long)]
    d: usize,
    /// Explicit cluster sizes, e.g. 500,1500,1500,1500
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Size of the first cluster (used with --zeta)
    #[arg(long)]
    l1: Option<usize>,
    /// Remaining clusters have l1*zeta points each
    #[arg(long)]
    zeta: Option<f64>,
    /// Minimum per-coordinate center gap
    #[arg(long, default_value_t = 1000.0)]
    separation: f64,
    /// Per-coordinate standard deviation
    #[arg(long, default_value_t = 20.0)]
    std: f64,
    /// Only separate the first center from the rest
    #[arg(long)]
    separate_first_only: bool,
    #[arg(long)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TargetArgs {
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Number of clusters (defaults to the label count when labels exist)
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Label column name, if the CSV has one
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output target JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Target JSON produced by `target`
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum)]
    solver: SolverArg,
    /// Stage-one sample count
    #[arg(long)]
    m: usize,
    /// Per-bin sample count (sequential / two-cluster)
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    #[arg(long, default_value_t = 0.1)]
    eta2: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Override the fuzzifier (defaults to the target's)
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Additive Gaussian noise level on oracle answers
    #[arg(long)]
    sigma: Option<f64>,
    /// Denoise noisy answers to this accuracy (median of means)
    #[arg(long)]
    kappa: Option<f64>,
    /// Serve membership queries through the similarity-query reduction
    #[arg(long)]
    via_similarity: bool,
    /// Candidate pool for the pure-anchor search
    #[arg(long, default_value_t = 24)]
    similarity_pool: usize,
    /// Omit memberships from the result JSON above this row count
    #[arg(long)]
    omit_memberships_over: Option<usize>,
    /// Export every answered oracle query as JSON lines to this path
    #[arg(long)]
    query_log: Option<PathBuf>,
    /// Output result JSON path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset CSV (source of ground-truth labels, if any)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    target: PathBuf,
    /// Result JSON produced by `solve`
    #[arg(long)]
    result: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output JSONL path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    /// JSONL records produced by `sweep`
    #[arg(long)]
    records: PathBuf,
    /// Output CSV path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Target(args) => cmd_target(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Aggregate(args) => cmd_aggregate(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(classify_exit(&err));
    }
}

/// 2 for configuration problems, 3 for runtime/degenerate failures.
fn classify_exit(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Config(_) | HarnessError::Parse { .. } | HarnessError::Csv(_) => 2,
                _ => 3,
            };
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return match c {
                CoreError::Config(_) | CoreError::Shape(_) | CoreError::Validity(_) => 2,
                _ => 3,
            };
        }
        if let Some(s) = cause.downcast_ref::<SolverError>() {
            return match s {
                SolverError::Invalid(_) => 2,
                _ => 3,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<std::num::ParseFloatError>().is_some()
        {
            return 2;
        }
    }
    3
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let sizes = match (args.sizes, args.l1, args.zeta) {
        (Some(sizes), None, None) => sizes,
        (None, Some(l1), Some(zeta)) => {
            let mut sizes = vec![l1; args.k];
            for s in sizes.iter_mut().skip(1) {
                *s = ((l1 as f64) * zeta).round().max(1.0) as usize;
            }
            sizes
        }
        _ => bail!(HarnessError::Config(
            "give either --sizes or both --l1 and --zeta".into()
        )),
    };
    let spec = SyntheticSpec {
        k: args.k,
        d: args.d,
        sizes,
        center_separation: args.separation,
        point_std: args.std,
        seed: args.seed,
        separate_first_only: args.separate_first_only,
    };
    let (x, labels) = generate_synthetic(&spec).map_err(HarnessError::Core)?;
    save_dataset_csv(&args.out, &x, Some(&labels))?;
    eprintln!(
        "wrote {} points of dimension {} to {}",
        x.len(),
        x.dim(),
        args.out.display()
    );
    Ok(())
}

fn cmd_target(args: TargetArgs) -> Result<()> {
    let (x, labels) = load_csv(&args.data, args.label_column.as_deref())?;
    let k = match (args.k, &labels) {
        (Some(k), _) => k,
        (None, Some(ls)) => fuzzykm::harness::label_count(ls),
        (None, None) => bail!(HarnessError::Config("--k required without labels".into())),
    };
    let mode = match args.mode {
        ModeArg::Lloyd => TargetMode::Lloyd,
        ModeArg::HardLabels => TargetMode::HardLabels,
    };
    let built = build_target(&x, k, args.alpha, mode, labels.as_deref(), args.seed)?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let file = TargetFile::new(
        &built.clustering,
        args.alpha,
        mode.as_str(),
        built.strict,
        built.warnings.clone(),
    );
    file.save(&args.out)?;
    eprintln!(
        "wrote target (k = {k}, strict = {}) to {}",
        built.strict,
        args.out.display()
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    // datasets written by `generate` carry a `label` column; treat it as
    // labels when present, never as a feature
    let (x, _) = match load_csv(&args.data, Some("label")) {
        Ok(pair) => pair,
        Err(HarnessError::Config(_)) => load_csv(&args.data, None)?,
        Err(e) => return Err(e.into()),
    };
    let target_file = TargetFile::load(&args.target)?;
    let target = target_file.clustering()?;
    if target.memberships().n() != x.len() {
        bail!(HarnessError::Config(format!(
            "target covers {} elements but the dataset has {}",
            target.memberships().n(),
            x.len()
        )));
    }
    let k = target.k();
    let cfg = SolverConfig {
        alpha: args.alpha.unwrap_or(target_file.alpha),
        m: args.m,
        r: args.r,
        eta: args.eta,
        eta1: args.eta1,
        eta2: args.eta2,
        delta: args.delta,
        seed: args.seed,
    };
    cfg.validate().map_err(HarnessError::Core)?;

    let mut oracle = TargetOracle::non_strict(target, args.seed ^ 0x0c1e);
    if let Some(sigma) = args.sigma {
        if sigma > 0.0 {
            oracle = oracle.with_noise(NoiseModel::Gaussian { sigma });
        }
    }
    if args.query_log.is_some() {
        oracle = oracle.with_logging();
    }

    let (result, log) = if args.via_similarity {
        if args.sigma.is_some() || args.kappa.is_some() {
            bail!(HarnessError::Config(
                "--via-similarity requires a noiseless oracle".into()
            ));
        }
        let params = SimilarityParams {
            candidate_pool: args.similarity_pool,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x51);
        let mut adapter = membership_oracle_from_similarity(oracle, k, &params, &mut rng)
            .map_err(|e| anyhow!("similarity reduction failed: {e}"))?;
        eprintln!(
            "similarity bootstrap via {:?}: {} pair + {} triplet queries",
            adapter.path(),
            adapter.bootstrap_cost().0,
            adapter.bootstrap_cost().1
        );
        let result = dispatch(args.solver, &x, &mut adapter, k, &cfg)?;
        let log = adapter.into_inner().ledger().export_log_jsonl();
        (result, log)
    } else if let Some(kappa) = args.kappa {
        let sigma = args
            .sigma
            .filter(|s| *s > 0.0)
            .ok_or_else(|| HarnessError::Config("--kappa needs --sigma > 0".into()))?;
        let mut denoised = DenoisedOracle::new(oracle, sigma, kappa, x.len())?;
        eprintln!(
            "denoising: {} batches x {} queries = {} oracle calls per logical query",
            denoised.batches(),
            denoised.per_batch(),
            denoised.per_call_cost()
        );
        let result = dispatch(args.solver, &x, &mut denoised, k, &cfg)?;
        let log = denoised.into_inner().ledger().export_log_jsonl();
        (result, log)
    } else {
        let result = dispatch(args.solver, &x, &mut oracle, k, &cfg)?;
        (result, oracle.ledger().export_log_jsonl())
    };
    if let Some(path) = &args.query_log {
        let text = log.expect("logging was enabled above");
        fs::write(path, text).context("writing query log")?;
        eprintln!("query log written to {}", path.display());
    }

    eprintln!(
        "{} finished: {} total queries over {} stages",
        result.solver,
        result.total_queries(),
        result.per_stage.len()
    );
    let json = result.to_json(args.omit_memberships_over);
    let text = serde_json::to_string_pretty(&json)?;
    match &args.out {
        Some(path) => fs::write(path, text).context("writing result")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn dispatch(
    solver: SolverArg,
    x: &fuzzykm::core::Dataset,
    oracle: &mut dyn MembershipQuerier,
    k: usize,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let result = match solver {
        SolverArg::TwoPhase => two_phase_solve(x, oracle, k, cfg)?,
        SolverArg::Sequential => sequential_solve(x, oracle, k, cfg)?,
        SolverArg::TwoCluster => {
            if k != 2 {
                bail!(HarnessError::Config(format!(
                    "the two-cluster solver needs k = 2, the target has k = {k}"
                )));
            }
            two_cluster_solve(x, oracle, cfg)?
        }
    };
    Ok(result)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let target_file = TargetFile::load(&args.target)?;
    let target = target_file.clustering()?;
    let labels = match (&args.data, &args.label_column) {
        (Some(path), col) => load_csv(path, Some(col.as_deref().unwrap_or("label")))?.1,
        (None, _) => None,
    };
    let text = fs::read_to_string(&args.result).context("reading result")?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let centers: Vec<Vec<f64>> = serde_json::from_value(value["centers"].clone())?;
    let memberships: Vec<Vec<f64>> = match &value["memberships"] {
        serde_json::Value::Null => bail!(HarnessError::Config(
            "result file has memberships omitted; re-run solve without --omit-memberships-over"
                .into()
        )),
        v => serde_json::from_value(v.clone())?,
    };
    let ledger: QueryLedger = match value.get("ledger") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => QueryLedger::default(),
    };
    let estimate = Clustering::new(
        centers,
        MembershipMatrix::new(memberships).map_err(HarnessError::Core)?,
    )
    .map_err(HarnessError::Core)?;
    let report = evaluate(&target, &estimate, labels.as_deref(), ledger)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).context("reading sweep config")?;
    let cfg = SweepConfig::parse(&text)?;
    let records = run_sweep(&cfg)?;
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    match &args.out {
        Some(path) => {
            let mut file = fs::File::create(path).context("creating output")?;
            write_records_jsonl(&mut file, &records)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            write_records_jsonl(&mut stdout, &records)?;
        }
    }
    eprintln!("{} runs, {} failed", records.len(), failures);
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let file = fs::File::open(&args.records).context("opening records")?;
    let records = read_records_jsonl(std::io::BufReader::new(file))?;
    let rows = aggregate(&records);
    match &args.out {
        Some(path) => {
            let out = fs::File::create(path).context("creating output")?;
            write_aggregate_csv(out, &rows)?;
        }
        None => write_aggregate_csv(std::io::stdout().lock(), &rows)?,
    }
    eprintln!(
        "aggregated {} records into {} rows",
        records.len(),
        rows.len()
    );
    Ok(())
}
