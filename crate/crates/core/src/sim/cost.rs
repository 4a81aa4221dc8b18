//! Task duration models.

use serde::{Deserialize, Serialize};

use super::machine::SimResource;
use crate::error::{invalid, Result};
use crate::graph::{Task, TaskGraph, TaskKind};
use crate::sched::Resource;

/// Matrix order and block size a Cholesky DAG was generated for; fixes the
/// (possibly ragged) dimensions of every task's operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGeometry {
    pub n: usize,
    pub b: usize,
}

impl BlockGeometry {
    pub fn new(n: usize, b: usize) -> Result<Self> {
        if b == 0 || b > n {
            return Err(invalid(format!("block size {b} outside 1..={n}")));
        }
        Ok(BlockGeometry { n, b })
    }

    pub fn blocks(&self) -> usize {
        self.n.div_ceil(self.b)
    }

    pub fn dim(&self, i: usize) -> usize {
        self.b.min(self.n.saturating_sub(i * self.b))
    }

    /// Floating-point operations of a task.
    pub fn flops(&self, t: &Task) -> f64 {
        let (bk, bi, bj) = (self.dim(t.k) as f64, self.dim(t.i) as f64, self.dim(t.j) as f64);
        match t.kind {
            TaskKind::Potrf => bk * bk * bk / 3.0,
            TaskKind::Trsm => bk * bk * bj,
            TaskKind::Syrk => bi * (bi + 1.0) * bk,
            TaskKind::Gemm => 2.0 * bi * bj * bk,
        }
    }

    /// Operand volume relative to a full `reference × reference` tile
    /// kernel; every kind's cost grows with the product of its three dims.
    pub fn volume_ratio(&self, t: &Task, reference: usize) -> f64 {
        let (bk, bi, bj) = (self.dim(t.k) as f64, self.dim(t.i) as f64, self.dim(t.j) as f64);
        let v = match t.kind {
            TaskKind::Potrf => bk * bk * bk,
            TaskKind::Trsm => bk * bk * bj,
            TaskKind::Syrk => bi * bi * bk,
            TaskKind::Gemm => bi * bj * bk,
        };
        v / (reference as f64).powi(3)
    }

    pub fn check_graph(&self, g: &TaskGraph) -> Result<()> {
        if g.block_span() > self.blocks() {
            return Err(invalid(format!(
                "graph indexes {} block rows but n={}, b={} has {}",
                g.block_span(),
                self.n,
                self.b,
                self.blocks()
            )));
        }
        Ok(())
    }
}

/// Mean task times in milliseconds at one block size, for a fast core, a
/// slow core and a fast+slow pair running dual-lane kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredTimes {
    pub block: usize,
    /// Indexed by `TaskKind` order C, T, S, G; each `[fast, slow, pair]`.
    pub ms: [[f64; 3]; 4],
}

impl MeasuredTimes {
    /// Averages measured on an Exynos 5422 for `n = 6144`, `b = 448`.
    pub fn exynos5422() -> Self {
        MeasuredTimes {
            block: 448,
            ms: [
                [94.49, 137.65, 83.96], // potrf
                [48.27, 216.70, 42.99], // trsm
                [47.22, 214.00, 44.54], // syrk
                [89.43, 410.84, 79.22], // gemm
            ],
        }
    }

    pub fn get(&self, kind: TaskKind, resource: Resource) -> f64 {
        let row = match kind {
            TaskKind::Potrf => 0,
            TaskKind::Trsm => 1,
            TaskKind::Syrk => 2,
            TaskKind::Gemm => 3,
        };
        let col = match resource {
            Resource::FastLane => 0,
            Resource::SlowLane => 1,
            Resource::VcPair => 2,
        };
        self.ms[row][col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostMode {
    /// Duration = task flops / (resource speed × rate).
    Flops { gflops_at_unit_speed: f64 },
    /// Measured per-kind, per-resource means, scaled cubically with block dims.
    Measured(MeasuredTimes),
    /// Every task costs `ns_at_unit_speed / speed`.
    Uniform { ns_at_unit_speed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub mode: CostMode,
    pub geometry: BlockGeometry,
}

impl CostModel {
    /// Flop-rate model; 2.0 GFLOPS per unit speed matches a Cortex-A15
    /// running a 448 GEMM in about 89 ms.
    pub fn flops(geometry: BlockGeometry) -> Self {
        CostModel { mode: CostMode::Flops { gflops_at_unit_speed: 2.0 }, geometry }
    }

    pub fn table3(geometry: BlockGeometry) -> Self {
        CostModel { mode: CostMode::Measured(MeasuredTimes::exynos5422()), geometry }
    }

    pub fn uniform(ns_at_unit_speed: u64) -> Self {
        CostModel { mode: CostMode::Uniform { ns_at_unit_speed }, geometry: BlockGeometry { n: 1, b: 1 } }
    }

    pub fn validate(&self, g: &TaskGraph) -> Result<()> {
        match self.mode {
            CostMode::Uniform { ns_at_unit_speed } => {
                if ns_at_unit_speed == 0 {
                    return Err(invalid("uniform task cost must be positive"));
                }
                Ok(())
            }
            CostMode::Flops { gflops_at_unit_speed } => {
                if gflops_at_unit_speed.is_nan() || gflops_at_unit_speed <= 0.0 {
                    return Err(invalid("flop rate must be positive"));
                }
                self.geometry.check_graph(g)
            }
            CostMode::Measured(m) => {
                if m.ms.iter().flatten().any(|&v| v.is_nan() || v <= 0.0) {
                    return Err(invalid("measured task times must be positive"));
                }
                self.geometry.check_graph(g)
            }
        }
    }

    /// Duration in whole nanoseconds (at least 1).
    pub fn duration_ns(&self, t: &Task, r: &SimResource) -> u64 {
        let ns = match self.mode {
            CostMode::Uniform { ns_at_unit_speed } => ns_at_unit_speed as f64 / r.speed,
            CostMode::Flops { gflops_at_unit_speed } => self.geometry.flops(t) / (r.speed * gflops_at_unit_speed),
            CostMode::Measured(m) => m.get(t.kind, r.class) * 1e6 * self.geometry.volume_ratio(t, m.block),
        };
        (ns.round() as u64).max(1)
    }

    /// Duration on a unit-speed fast core; the CATS priority weight.
    pub fn fast_duration_ns(&self, t: &Task) -> u64 {
        self.duration_ns(t, &SimResource { id: 0, class: Resource::FastLane, speed: 1.0 })
    }
}
