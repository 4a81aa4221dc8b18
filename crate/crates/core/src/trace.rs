//! Execution traces shared by the runtime and the simulator, and the
//! per-worker statistics derived from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{TaskGraph, TaskId, TaskKind};

/// One executed task. Times are nanoseconds from the start of the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub worker: usize,
    pub task: TaskId,
    pub kind: TaskKind,
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl TraceEvent {
    pub fn duration_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    /// Sorted by worker, then start time, then task id.
    pub events: Vec<TraceEvent>,
    pub workers: usize,
    pub wall_start_ns: u64,
    pub wall_end_ns: u64,
}

impl Trace {
    pub fn new(workers: usize, mut events: Vec<TraceEvent>) -> Self {
        events.sort_by_key(|e| (e.worker, e.start_ns, e.task));
        let wall_end_ns = events.iter().map(|e| e.end_ns).max().unwrap_or(0);
        let workers = workers.max(events.iter().map(|e| e.worker + 1).max().unwrap_or(0));
        Trace { events, workers, wall_start_ns: 0, wall_end_ns }
    }

    pub fn makespan_ns(&self) -> u64 {
        self.wall_end_ns - self.wall_start_ns
    }

    /// JSON array of events with stable field names.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("trace serialization cannot fail")
    }

    /// Parses a trace array. The worker count is one more than the largest
    /// worker id present.
    pub fn from_json(text: &str) -> Result<Trace> {
        let events: Vec<TraceEvent> = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if let Some(e) = events.iter().find(|e| e.end_ns < e.start_ns) {
            return Err(Error::Parse(format!("task {} ends before it starts", e.task)));
        }
        Ok(Trace::new(0, events))
    }

    /// Events in start-time order across all workers.
    pub fn execution_order(&self) -> Vec<TaskId> {
        let mut ev: Vec<_> = self.events.iter().collect();
        ev.sort_by_key(|e| (e.start_ns, e.end_ns, e.task));
        ev.into_iter().map(|e| e.task).collect()
    }

    /// Checks per-worker non-overlap, exactly-once execution of every task
    /// of `g`, and `end(pred) <= start(succ)` for every edge.
    pub fn check(&self, g: &TaskGraph) -> std::result::Result<(), String> {
        for w in self.events.windows(2) {
            if w[0].worker == w[1].worker && w[0].end_ns > w[1].start_ns {
                return Err(format!("worker {} overlaps tasks {} and {}", w[0].worker, w[0].task, w[1].task));
            }
        }
        let mut at = vec![None; g.len()];
        for e in &self.events {
            match at.get_mut(e.task) {
                None => return Err(format!("unknown task {}", e.task)),
                Some(Some(_)) => return Err(format!("task {} executed twice", e.task)),
                Some(slot) => *slot = Some((e.start_ns, e.end_ns)),
            }
        }
        if let Some(missing) = at.iter().position(Option::is_none) {
            return Err(format!("task {missing} never executed"));
        }
        for &(p, q) in g.edges() {
            let (_, end_p) = at[p].unwrap();
            let (start_q, _) = at[q].unwrap();
            if end_p > start_q {
                return Err(format!("edge {p}->{q} violated: {end_p} > {start_q}"));
            }
        }
        Ok(())
    }
}

/// Share of a horizon each worker spent running tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker: usize,
    pub running: f64,
    pub idle: f64,
}

/// Running and idle fractions per worker over `[0, horizon_ns]`.
pub fn idle_stats(trace: &Trace, horizon_ns: u64) -> Result<Vec<WorkerStats>> {
    if horizon_ns < trace.wall_end_ns {
        return Err(invalid(format!("horizon {horizon_ns} ns is shorter than the trace ({} ns)", trace.wall_end_ns)));
    }
    let mut busy = vec![0u64; trace.workers];
    for e in &trace.events {
        busy[e.worker] += e.duration_ns();
    }
    Ok(busy
        .into_iter()
        .enumerate()
        .map(|(worker, b)| {
            let running = if horizon_ns == 0 { 0.0 } else { b as f64 / horizon_ns as f64 };
            WorkerStats { worker, running, idle: 1.0 - running }
        })
        .collect())
}

pub fn mean_idle(stats: &[WorkerStats]) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.iter().map(|s| s.idle).sum::<f64>() / stats.len() as f64
}

/// Mean task duration for one worker and kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindMean {
    pub worker: usize,
    pub kind: TaskKind,
    pub count: usize,
    pub mean_ms: f64,
}

/// Per-worker, per-kind mean durations, ordered by worker then kind.
pub fn kind_means(trace: &Trace) -> Vec<KindMean> {
    let mut acc: BTreeMap<(usize, TaskKind), (usize, u64)> = BTreeMap::new();
    for e in &trace.events {
        let slot = acc.entry((e.worker, e.kind)).or_default();
        slot.0 += 1;
        slot.1 += e.duration_ns();
    }
    acc.into_iter()
        .map(|((worker, kind), (count, total))| KindMean {
            worker,
            kind,
            count,
            mean_ms: total as f64 / count as f64 / 1e6,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_cholesky_dag;

    fn ev(worker: usize, task: TaskId, start_ns: u64, end_ns: u64) -> TraceEvent {
        TraceEvent { worker, task, kind: TaskKind::Gemm, k: 0, i: 0, j: 0, start_ns, end_ns }
    }

    #[test]
    fn idle_fractions() {
        let t = Trace::new(2, vec![ev(0, 0, 0, 100)]);
        let s = idle_stats(&t, 100).unwrap();
        assert_eq!(s[0].idle, 0.0);
        assert_eq!(s[1].idle, 1.0);
        assert!(idle_stats(&t, 99).is_err());
        assert_eq!(mean_idle(&s), 0.5);
    }

    #[test]
    fn json_round_trip() {
        let t = Trace::new(3, vec![ev(2, 1, 5, 9), ev(0, 0, 0, 4)]);
        let back = Trace::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(t.to_json().contains("\"start_ns\""));
        assert!(t.to_json().contains("\"kind\": \"G\""));
        assert!(Trace::from_json("[{\"worker\": 0}]").is_err());
    }

    #[test]
    fn check_detects_violations() {
        let g = build_cholesky_dag(1).unwrap();
        assert!(Trace::new(1, vec![ev(0, 0, 0, 1)]).check(&g).is_ok());
        assert!(Trace::new(1, vec![]).check(&g).is_err());
        assert!(Trace::new(1, vec![ev(0, 0, 0, 1), ev(0, 0, 1, 2)]).check(&g).is_err());

        let g = build_cholesky_dag(2).unwrap();
        // C0 -> T01 -> S11 -> C1; run T01 before C0 finishes
        let bad = Trace::new(2, vec![ev(0, 0, 0, 10), ev(1, 1, 5, 20), ev(0, 2, 20, 30), ev(0, 3, 30, 40)]);
        assert!(bad.check(&g).unwrap_err().contains("edge 0->1"));
        let overlap = Trace::new(1, vec![ev(0, 0, 0, 10), ev(0, 1, 5, 20)]);
        assert!(overlap.check(&g).unwrap_err().contains("overlaps"));
    }

    #[test]
    fn means_per_kind() {
        let t = Trace::new(1, vec![ev(0, 0, 0, 2_000_000), ev(0, 1, 2_000_000, 6_000_000)]);
        let m = kind_means(&t);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].count, 2);
        assert_eq!(m[0].mean_ms, 3.0);
    }
}
