//! Argument parsing and dispatch for the `ampsched` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use ampsched_core::blis::{kernel_crossover_probe, CROSSOVER_CSV_HEADER};
use ampsched_core::{LaneConfig, Policy, PolicyKind, Stealing, TaskGraph, View};
use clap::{Args, Parser, Subcommand};

use crate::bench::DEFAULT_TOLERANCE;
use crate::files::default_kinds_path;
use crate::simulate::CostKind;
use crate::{
    cmd_bench, cmd_dag, cmd_simulate, cmd_trace, parse_list, read_file, to_csv, usage, write_file, BenchConfig,
    BenchRow, CliError, KeyValues, Result, SimRow, SimulateConfig,
};

/// Environment variable that overrides `--workers`.
pub const THREADS_ENV: &str = "AMPSCHED_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ampsched", version, about = "Blocked Cholesky scheduling on asymmetric multicores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factor random SPD matrices natively and report the best time.
    Bench(BenchArgs),
    /// Simulate the factorization on the Exynos 5422 model.
    Simulate(SimulateArgs),
    /// Export the Cholesky task DAG as DOT and JSON.
    Dag(DagArgs),
    /// Summarize a trace JSON file.
    Trace(TraceArgs),
    /// Time blocked vs dual-lane GEMM over square sizes.
    Probe(ProbeArgs),
}

#[derive(Debug, Args, Default)]
pub struct PolicyArgs {
    /// CATS criticality threshold in [0, 1].
    #[arg(long)]
    pub cats_threshold: Option<f64>,
    /// CATS stealing mode: none, uni or bi.
    #[arg(long)]
    pub stealing: Option<Stealing>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// key=value file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Matrix order(s), comma separated.
    #[arg(long)]
    pub n: Option<String>,
    /// Block size(s), comma separated; more than one runs a sweep.
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Largest accepted residual.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub policy_args: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub machine: Option<String>,
    /// gts or vc; by default VC for the VC policy and GTS otherwise.
    #[arg(long)]
    pub view: Option<String>,
    /// Enabled big cores (0-4).
    #[arg(long)]
    pub fast: Option<usize>,
    /// Enabled LITTLE cores (0-4).
    #[arg(long)]
    pub slow: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    /// Policy or comma-separated policies.
    #[arg(long)]
    pub policy: Option<String>,
    /// flops (rate model) or table3 (measured per-task means).
    #[arg(long)]
    pub cost: Option<CostKind>,
    /// Simulate this DAG JSON instead of generating the Cholesky DAG.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub policy_args: PolicyArgs,
}

#[derive(Debug, Args)]
pub struct DagArgs {
    /// Blocks per dimension.
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub dot: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Per-worker running/idle CSV.
    #[arg(long)]
    pub summary: PathBuf,
    /// Per-worker, per-kind mean duration CSV; defaults to
    /// `<summary stem>.kinds.csv`.
    #[arg(long)]
    pub kinds: Option<PathBuf>,
    /// Worker count of the run, for workers that executed no task.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, default_value = "32,64,96,128,160,192,256,320,448")]
    pub sizes: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

const BENCH_KEYS: &[&str] =
    &["n", "b", "policy", "workers", "seed", "reps", "tolerance", "csv", "cats-threshold", "stealing"];
const SIM_KEYS: &[&str] = &[
    "machine",
    "view",
    "fast",
    "slow",
    "n",
    "b",
    "policy",
    "cost",
    "dag",
    "csv",
    "trace",
    "cats-threshold",
    "stealing",
];

fn build_policy(kind: PolicyKind, args: &PolicyArgs, kv: &KeyValues) -> Result<Policy> {
    let mut p = Policy::new(kind);
    if let Some(t) = kv.pick(args.cats_threshold, "cats-threshold")? {
        p.cats_threshold = t;
    }
    if let Some(s) = kv.pick(args.stealing, "stealing")? {
        p.stealing = s;
    }
    Ok(p)
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    parse_list(s).map_err(|e| usage(format!("--{what}: {e}")))
}

/// `env` (the value of [`THREADS_ENV`], if set) wins over flag and file.
pub fn bench_config(args: &BenchArgs, env: Option<&str>) -> Result<(BenchConfig, Option<PathBuf>)> {
    let kv = KeyValues::load(args.config.as_deref())?;
    kv.check_keys(BENCH_KEYS)?;
    let n: String = kv.pick(args.n.clone(), "n")?.ok_or_else(|| usage("--n is required"))?;
    let b: String = kv.pick(args.b.clone(), "b")?.ok_or_else(|| usage("--b is required"))?;
    let kind = kv.pick(args.policy, "policy")?.unwrap_or(PolicyKind::Oblivious);
    let mut workers = kv.pick(args.workers, "workers")?.unwrap_or(1);
    if let Some(v) = env {
        workers = v.trim().parse().map_err(|_| usage(format!("{THREADS_ENV}={v} is not a worker count")))?;
    }
    let cfg = BenchConfig {
        ns: list(&n, "n")?,
        bs: list(&b, "b")?,
        policy: build_policy(kind, &args.policy_args, &kv)?,
        workers,
        seed: kv.pick(args.seed, "seed")?.unwrap_or(1),
        repetitions: kv.pick(args.reps, "reps")?.unwrap_or(3),
        tolerance: kv.pick(args.tolerance, "tolerance")?.unwrap_or(DEFAULT_TOLERANCE),
    };
    cfg.validate()?;
    Ok((cfg, kv.pick(args.csv.clone(), "csv")?))
}

pub fn simulate_config(args: &SimulateArgs) -> Result<(SimulateConfig, Option<PathBuf>)> {
    let kv = KeyValues::load(args.config.as_deref())?;
    kv.check_keys(SIM_KEYS)?;
    let machine = kv.pick(args.machine.clone(), "machine")?.unwrap_or_else(|| "exynos5422".into());
    if machine != "exynos5422" {
        return Err(usage(format!("unknown machine `{machine}` (only exynos5422 is modeled)")));
    }
    let view = match kv.pick(args.view.clone(), "view")?.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => None,
        Some("gts") => Some(View::Gts),
        Some("vc") => Some(View::Vc),
        Some(other) => return Err(usage(format!("unknown view `{other}` (expected gts or vc)"))),
    };
    let n = kv.pick(args.n, "n")?.ok_or_else(|| usage("--n is required"))?;
    let b = kv.pick(args.b, "b")?.ok_or_else(|| usage("--b is required"))?;
    let policies: String = kv.pick(args.policy.clone(), "policy")?.unwrap_or_else(|| "oblivious,cats,vc".into());
    let policies = list::<PolicyKind>(&policies, "policy")?
        .into_iter()
        .map(|k| build_policy(k, &args.policy_args, &kv))
        .collect::<Result<Vec<_>>>()?;
    let dag = match kv.pick(args.dag.clone(), "dag")? {
        Some(p) => Some(TaskGraph::from_json(&read_file(&p)?)?),
        None => None,
    };
    let cfg = SimulateConfig {
        n,
        b,
        policies,
        view,
        fast: kv.pick(args.fast, "fast")?.unwrap_or(4),
        slow: kv.pick(args.slow, "slow")?.unwrap_or(4),
        cost: kv.pick(args.cost, "cost")?.unwrap_or(CostKind::Table3),
        dag,
        trace: kv.pick(args.trace.clone(), "trace")?,
    };
    Ok((cfg, kv.pick(args.csv.clone(), "csv")?))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

/// Runs one parsed command line. `threads_env` is the value of
/// [`THREADS_ENV`], if set.
pub fn run_cli(cli: Cli, threads_env: Option<&str>) -> Result<()> {
    match cli.command {
        Command::Bench(args) => {
            let (cfg, csv) = bench_config(&args, threads_env)?;
            let rows = cmd_bench(&cfg)?;
            emit(csv.as_deref(), &to_csv(&rows, BenchRow::HEADER)?)
        }
        Command::Simulate(args) => {
            let (cfg, csv) = simulate_config(&args)?;
            let rows = cmd_simulate(&cfg)?;
            emit(csv.as_deref(), &to_csv(&rows, SimRow::HEADER)?)
        }
        Command::Dag(args) => {
            let tasks = cmd_dag(args.s, &args.dot, args.json.as_deref())?;
            eprintln!("wrote {tasks} tasks to {}", args.dot.display());
            Ok(())
        }
        Command::Trace(args) => {
            let kinds = args.kinds.clone().unwrap_or_else(|| default_kinds_path(&args.summary));
            cmd_trace(&args.input, &args.summary, &kinds, args.workers).map(|_| ())
        }
        Command::Probe(args) => {
            let sizes = list::<usize>(&args.sizes, "sizes")?;
            let rows = kernel_crossover_probe(&sizes, &LaneConfig::default())?;
            let mut text = format!("{CROSSOVER_CSV_HEADER}\n");
            for r in rows {
                text.push_str(&r.to_csv_line());
                text.push('\n');
            }
            emit(args.csv.as_deref(), &text)
        }
    }
}
