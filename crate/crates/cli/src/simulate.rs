//! Simulated runs on the Exynos 5422 model.

use std::path::{Path, PathBuf};

use ampsched_core::sim::{gflops_for, lower_bounds};
use ampsched_core::{
    build_cholesky_dag, simulate, BlockGeometry, CostModel, MachineModel, Policy, PolicyKind, TaskGraph, View,
};
use serde::Serialize;

use crate::{usage, write_file, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Flops,
    Table3,
}

impl std::str::FromStr for CostKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "flops" => Ok(CostKind::Flops),
            "table3" => Ok(CostKind::Table3),
            other => Err(format!("unknown cost model `{other}` (expected flops or table3)")),
        }
    }
}

impl CostKind {
    fn name(self) -> &'static str {
        match self {
            CostKind::Flops => "flops",
            CostKind::Table3 => "table3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub n: usize,
    pub b: usize,
    /// Simulated one after another; each gets its own row.
    pub policies: Vec<Policy>,
    /// `None` picks VC for the VC policy and GTS otherwise.
    pub view: Option<View>,
    pub fast: usize,
    pub slow: usize,
    pub cost: CostKind,
    /// Replaces the generated Cholesky DAG.
    pub dag: Option<TaskGraph>,
    /// Trace JSON output; with several policies the policy name is
    /// inserted before the extension.
    pub trace: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn new(n: usize, b: usize, policies: Vec<Policy>) -> Self {
        SimulateConfig { n, b, policies, view: None, fast: 4, slow: 4, cost: CostKind::Table3, dag: None, trace: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub policy: String,
    pub view: String,
    pub fast: usize,
    pub slow: usize,
    pub n: usize,
    pub b: usize,
    pub tasks: usize,
    pub cost: String,
    pub makespan_ns: u64,
    pub seconds: f64,
    pub gflops: f64,
    pub mean_idle: f64,
    pub bound_ns: f64,
}

impl SimRow {
    pub const HEADER: &'static [&'static str] = &[
        "policy",
        "view",
        "fast",
        "slow",
        "n",
        "b",
        "tasks",
        "cost",
        "makespan_ns",
        "seconds",
        "gflops",
        "mean_idle",
        "bound_ns",
    ];
}

pub fn trace_path(base: &Path, policy: PolicyKind, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{policy}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{policy}"),
    };
    base.with_file_name(name)
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<Vec<SimRow>> {
    if cfg.policies.is_empty() {
        return Err(usage("at least one policy is required"));
    }
    let geometry = BlockGeometry::new(cfg.n, cfg.b)?;
    let cost = match cfg.cost {
        CostKind::Flops => CostModel::flops(geometry),
        CostKind::Table3 => CostModel::table3(geometry),
    };
    let generated;
    let g = match &cfg.dag {
        Some(g) => g,
        None => {
            generated = build_cholesky_dag(geometry.blocks())?;
            &generated
        }
    };
    let several = cfg.policies.len() > 1;
    let mut rows = Vec::with_capacity(cfg.policies.len());
    for policy in &cfg.policies {
        let view = cfg.view.unwrap_or(if policy.kind == PolicyKind::Vc { View::Vc } else { View::Gts });
        let machine = MachineModel::exynos_subset(cfg.fast, cfg.slow, view)?;
        let r = simulate(g, &machine, &cost, policy)?;
        if let Some(base) = &cfg.trace {
            write_file(&trace_path(base, policy.kind, several), &r.trace.to_json())?;
        }
        rows.push(SimRow {
            policy: policy.kind.to_string(),
            view: format!("{view:?}").to_ascii_lowercase(),
            fast: cfg.fast,
            slow: cfg.slow,
            n: cfg.n,
            b: cfg.b,
            tasks: g.len(),
            cost: cfg.cost.name().to_string(),
            makespan_ns: r.makespan_ns,
            seconds: r.makespan_seconds(),
            gflops: gflops_for(cfg.n, r.makespan_seconds()),
            mean_idle: r.mean_idle(),
            bound_ns: lower_bounds(g, &machine, &cost).max(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_names() {
        let p = Path::new("out/run.json");
        assert_eq!(trace_path(p, PolicyKind::Cats, false), p);
        assert_eq!(trace_path(p, PolicyKind::Cats, true), Path::new("out/run.cats.json"));
        assert_eq!(trace_path(Path::new("t"), PolicyKind::Vc, true), Path::new("t.vc"));
    }
}
