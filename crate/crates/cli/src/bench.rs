//! Native benchmark: factor random SPD matrices with the threaded runtime
//! and report the best of several repetitions.

use std::time::Instant;

use ampsched_core::runtime::{default_workers, gflops};
use ampsched_core::{build_cholesky_dag, make_spd, residual, run, BlockedMatrix, Policy, RunOptions};
use serde::Serialize;

use crate::{usage, CliError, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    /// One entry runs a single block size; several make a sweep.
    pub bs: Vec<usize>,
    pub policy: Policy,
    pub workers: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// Largest accepted residual.
    pub tolerance: f64,
}

impl BenchConfig {
    pub fn new(n: usize, b: usize, policy: Policy) -> Self {
        BenchConfig {
            ns: vec![n],
            bs: vec![b],
            policy,
            workers: 1,
            seed: 1,
            repetitions: 3,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.bs.is_empty() {
            return Err(usage("need at least one n and one b"));
        }
        for &n in &self.ns {
            for &b in &self.bs {
                if b == 0 || b > n {
                    return Err(usage(format!("block size {b} must satisfy 1 <= b <= n = {n}")));
                }
            }
        }
        if self.repetitions == 0 {
            return Err(usage("repetitions must be at least 1"));
        }
        if self.workers == 0 {
            return Err(usage("workers must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(usage("tolerance must be positive"));
        }
        Ok(())
    }
}

/// `row` is `run` for a measured (n, b) point and `best` for the block
/// size with the highest rate at a given n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub row: &'static str,
    pub n: usize,
    pub b: usize,
    pub policy: String,
    pub workers: usize,
    pub seconds_min: f64,
    pub gflops: f64,
    pub residual: f64,
}

impl BenchRow {
    pub const HEADER: &'static [&'static str] =
        &["row", "n", "b", "policy", "workers", "seconds_min", "gflops", "residual"];
}

/// Raw measurements for one (n, b) point.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub seconds: Vec<f64>,
    /// Worst residual over the repetitions.
    pub residual: f64,
}

impl Measurement {
    pub fn seconds_min(&self) -> f64 {
        self.seconds.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs one (n, b) point `cfg.repetitions` times, checking every factor.
pub fn measure(cfg: &BenchConfig, n: usize, b: usize) -> Result<Measurement> {
    let a = make_spd(n, cfg.seed)?;
    let blocked = BlockedMatrix::partition(&a, b)?;
    let g = build_cholesky_dag(blocked.block_count())?;
    let workers = default_workers(cfg.policy.kind, cfg.workers);
    let opts = RunOptions::default();
    let mut out = Measurement { seconds: Vec::with_capacity(cfg.repetitions), residual: 0.0 };
    for rep in 0..cfg.repetitions {
        let input = blocked.clone();
        let t0 = Instant::now();
        let (factor, _) = run(&g, input, &cfg.policy, &workers, &opts).map_err(|f| CliError::Core(f.error))?;
        out.seconds.push(t0.elapsed().as_secs_f64());
        let r = residual(&a, &factor.upper_factor());
        if r.is_nan() || r > cfg.tolerance {
            return Err(CliError::Verification(format!(
                "n={n} b={b} policy={} repetition {rep}: residual {r:e} exceeds {:e}",
                cfg.policy.kind, cfg.tolerance
            )));
        }
        out.residual = out.residual.max(r);
    }
    Ok(out)
}

/// One `run` row per (n, b); with several block sizes, also one `best` row
/// per n.
pub fn cmd_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let first = rows.len();
        for &b in &cfg.bs {
            let m = measure(cfg, n, b)?;
            let secs = m.seconds_min();
            rows.push(BenchRow {
                row: "run",
                n,
                b,
                policy: cfg.policy.kind.to_string(),
                workers: cfg.workers,
                seconds_min: secs,
                gflops: gflops(n, secs.max(f64::MIN_POSITIVE))?,
                residual: m.residual,
            });
        }
        if cfg.bs.len() > 1 {
            let best = rows[first..]
                .iter()
                .max_by(|x, y| x.gflops.total_cmp(&y.gflops).then(y.b.cmp(&x.b)))
                .expect("at least one block size")
                .clone();
            rows.push(BenchRow { row: "best", ..best });
        }
    }
    Ok(rows)
}
