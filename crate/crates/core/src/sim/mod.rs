//! Deterministic discrete-event replay of a task graph on a modeled
//! asymmetric machine, using the same dispatch rules as the threaded
//! runtime.
//!
//! Time is integer nanoseconds. At every instant the simulator first
//! retires all tasks finishing then (releasing their successors as one
//! batch), then offers work to idle resources in ascending id order.

mod cost;
mod machine;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

pub use cost::{BlockGeometry, CostMode, CostModel, MeasuredTimes};
pub use machine::{Core, CoreKind, MachineModel, SimResource, View};

use crate::blis::{split_loop3, LaneConfig};
use crate::error::{invalid, Result};
use crate::graph::{bottom_levels, TaskGraph, TaskKind};
use crate::sched::{Policy, PolicyKind, ReadyQueues, Resource};
use crate::trace::{idle_stats, kind_means, KindMean, Trace, TraceEvent, WorkerStats};

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub makespan_ns: u64,
    pub trace: Trace,
    pub idle: Vec<WorkerStats>,
    pub kind_means: Vec<KindMean>,
    /// Tasks CATS placed in its critical queue (all false otherwise).
    pub critical: Vec<bool>,
}

impl SimResult {
    pub fn makespan_seconds(&self) -> f64 {
        self.makespan_ns as f64 * 1e-9
    }

    pub fn mean_idle(&self) -> f64 {
        crate::trace::mean_idle(&self.idle)
    }
}

pub fn simulate(g: &TaskGraph, machine: &MachineModel, cost: &CostModel, policy: &Policy) -> Result<SimResult> {
    match (policy.kind, machine.view()) {
        (PolicyKind::Vc, View::Vc) | (PolicyKind::Oblivious | PolicyKind::Cats, View::Gts) => {}
        (kind, view) => {
            return Err(invalid(format!("policy {kind} is inconsistent with the {view:?} machine view")));
        }
    }
    let resources = machine.resources();
    policy.validate(&resources.iter().map(|r| r.class).collect::<Vec<_>>())?;
    cost.validate(g)?;

    let n = g.len();
    let priorities = match policy.kind {
        PolicyKind::Cats => bottom_levels(g, |t| cost.fast_duration_ns(t) as f64),
        _ => Vec::new(),
    };
    let mut queues = ReadyQueues::new(*policy, priorities);
    let mut indegree: Vec<usize> = (0..n).map(|t| g.indegree(t)).collect();
    let mut initial: Vec<_> = (0..n).filter(|&t| indegree[t] == 0).collect();
    queues.push_ready(&mut initial);

    let mut busy: Vec<Option<usize>> = vec![None; resources.len()];
    let mut running = BinaryHeap::new();
    let mut events = Vec::with_capacity(n);
    let mut now = 0u64;
    let mut done = 0;
    while done < n {
        for r in &resources {
            if busy[r.id].is_some() {
                continue;
            }
            let fast_idle =
                resources.iter().any(|x| x.class == Resource::FastLane && busy[x.id].is_none() && x.id != r.id);
            if let Some(task) = queues.next(r.class, fast_idle) {
                let t = g.task(task);
                let end = now + cost.duration_ns(t, r);
                busy[r.id] = Some(task);
                running.push(Reverse((end, r.id)));
                events.push(TraceEvent {
                    worker: r.id,
                    task,
                    kind: t.kind,
                    k: t.k,
                    i: t.i,
                    j: t.j,
                    start_ns: now,
                    end_ns: end,
                });
            }
        }
        let Some(&Reverse((t_next, _))) = running.peek() else {
            return Err(invalid("no resource can run the remaining ready tasks"));
        };
        now = t_next;
        let mut released = Vec::new();
        while let Some(&Reverse((end, rid))) = running.peek() {
            if end != now {
                break;
            }
            running.pop();
            let task = busy[rid].take().expect("running resource has a task");
            done += 1;
            for &s in g.successors(task) {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    released.push(s);
                }
            }
        }
        queues.push_ready(&mut released);
    }

    let trace = Trace::new(resources.len(), events);
    let makespan_ns = trace.makespan_ns();
    let idle = idle_stats(&trace, makespan_ns)?;
    let kind_means = kind_means(&trace);
    Ok(SimResult { makespan_ns, idle, kind_means, critical: queues.critical_flags().to_vec(), trace })
}

/// Schedule-independent lower bounds on the makespan, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    /// Longest path with every task on its fastest resource.
    pub critical_path_ns: f64,
    /// Total work over aggregate throughput. Work is measured in
    /// fastest-resource time; a resource's throughput is its best ratio of
    /// fastest time to own time over all tasks.
    pub work_ns: f64,
}

impl LowerBounds {
    pub fn max(&self) -> f64 {
        self.critical_path_ns.max(self.work_ns)
    }
}

pub fn lower_bounds(g: &TaskGraph, machine: &MachineModel, cost: &CostModel) -> LowerBounds {
    let resources = machine.resources();
    let best: Vec<f64> =
        g.tasks().iter().map(|t| resources.iter().map(|r| cost.duration_ns(t, r)).min().unwrap_or(0) as f64).collect();
    let critical_path_ns = bottom_levels(g, |t| best[t.id]).into_iter().fold(0.0, f64::max);
    let throughput: f64 = resources
        .iter()
        .map(|r| g.tasks().iter().map(|t| best[t.id] / cost.duration_ns(t, r) as f64).fold(0.0, f64::max))
        .sum();
    let work: f64 = best.iter().sum();
    let work_ns = if throughput > 0.0 { work / throughput } else { 0.0 };
    LowerBounds { critical_path_ns, work_ns }
}

/// Cholesky flop count `n³/3` per second, in GFLOPS.
pub fn gflops_for(n: usize, seconds: f64) -> f64 {
    (n as f64).powi(3) / 3.0 / seconds / 1e9
}

/// Thread fork/join cost charged to a dual-lane kernel call when both lanes
/// are active.
pub const DEFAULT_FORK_JOIN_NS: f64 = 50_000.0;

/// Modeled single-lane versus dual-lane GEMM time for one square size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeledKernel {
    pub size: usize,
    pub seq_seconds: f64,
    pub asym_seconds: f64,
}

/// Kernel-level model of the dual-lane GEMM built from measured task
/// means: each lane's rows run at its measured per-row rate, the slower
/// lane finishes the call, the measured pair time at the reference block
/// fixes a contention factor over that ideal, and a fork/join cost is
/// added whenever both lanes run.
pub fn modeled_gemm_crossover(sizes: &[usize], times: &MeasuredTimes, fork_join_ns: f64) -> Vec<ModeledKernel> {
    let fast_ms = times.get(TaskKind::Gemm, Resource::FastLane);
    let slow_ms = times.get(TaskKind::Gemm, Resource::SlowLane);
    let pair_ms = times.get(TaskKind::Gemm, Resource::VcPair);
    let lanes = LaneConfig { speed_fast: slow_ms / fast_ms, speed_slow: 1.0, ..LaneConfig::default() };
    let ideal = |m: usize| -> (f64, bool) {
        let vol = (m as f64 / times.block as f64).powi(3);
        let split = split_loop3(m, &lanes);
        let rows = |r: usize| r as f64 / m.max(1) as f64;
        let fast = fast_ms * 1e-3 * vol * rows(split.fast_range.len());
        let slow = slow_ms * 1e-3 * vol * rows(split.slow_range.len());
        (fast.max(slow), !split.fast_range.is_empty() && !split.slow_range.is_empty())
    };
    let contention = pair_ms * 1e-3 / ideal(times.block).0;
    sizes
        .iter()
        .map(|&size| {
            let seq_seconds = fast_ms * 1e-3 * (size as f64 / times.block as f64).powi(3);
            let (t, dual) = ideal(size);
            let asym_seconds = if dual { contention * t + fork_join_ns * 1e-9 } else { t };
            ModeledKernel { size, seq_seconds, asym_seconds }
        })
        .collect()
}

/// Smallest size from which the dual-lane kernel is modeled strictly faster
/// at every larger size of the sweep.
pub fn crossover_size(rows: &[ModeledKernel]) -> Option<usize> {
    let last_slower = rows.iter().rposition(|r| r.asym_seconds >= r.seq_seconds);
    match last_slower {
        None => rows.first().map(|r| r.size),
        Some(i) => rows.get(i + 1).map(|r| r.size),
    }
}
