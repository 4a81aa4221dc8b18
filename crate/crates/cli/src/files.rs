//! DAG export and trace post-processing.

use std::path::Path;

use ampsched_core::trace::{idle_stats, kind_means};
use ampsched_core::{build_cholesky_dag, Trace};
use serde::Serialize;

use crate::{read_file, usage, write_csv, write_file, Result};

/// Writes the DOT rendering of the `s × s` Cholesky DAG and, optionally,
/// its JSON form. Returns the task count.
pub fn cmd_dag(s: usize, dot: &Path, json: Option<&Path>) -> Result<usize> {
    let g = build_cholesky_dag(s)?;
    write_file(dot, &g.to_dot())?;
    if let Some(p) = json {
        write_file(p, &g.to_json())?;
    }
    Ok(g.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub worker: usize,
    pub tasks: usize,
    pub running_pct: f64,
    pub idle_pct: f64,
}

impl SummaryRow {
    pub const HEADER: &'static [&'static str] = &["worker", "tasks", "running_pct", "idle_pct"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindRow {
    pub worker: usize,
    pub kind: char,
    pub count: usize,
    pub mean_ms: f64,
}

impl KindRow {
    pub const HEADER: &'static [&'static str] = &["worker", "kind", "count", "mean_ms"];
}

/// Idle and running shares per worker, measured from the first task start
/// to the last task end.
pub fn summarize(trace: &Trace) -> Result<Vec<SummaryRow>> {
    let origin = trace.events.iter().map(|e| e.start_ns).min().unwrap_or(0);
    let shifted = Trace::new(
        trace.workers,
        trace
            .events
            .iter()
            .cloned()
            .map(|mut e| {
                e.start_ns -= origin;
                e.end_ns -= origin;
                e
            })
            .collect(),
    );
    let stats = idle_stats(&shifted, shifted.wall_end_ns)?;
    Ok(stats
        .into_iter()
        .map(|s| SummaryRow {
            worker: s.worker,
            tasks: trace.events.iter().filter(|e| e.worker == s.worker).count(),
            running_pct: 100.0 * s.running,
            idle_pct: 100.0 * s.idle,
        })
        .collect())
}

pub fn kind_rows(trace: &Trace) -> Vec<KindRow> {
    kind_means(trace)
        .into_iter()
        .map(|m| KindRow { worker: m.worker, kind: m.kind.letter(), count: m.count, mean_ms: m.mean_ms })
        .collect()
}

/// Reads a trace JSON file and writes the per-worker summary CSV and the
/// per-kind mean duration CSV. Workers that ran nothing do not appear in a
/// trace; `workers` restores them to the summary.
pub fn cmd_trace(
    input: &Path,
    summary: &Path,
    kinds: &Path,
    workers: Option<usize>,
) -> Result<(Vec<SummaryRow>, Vec<KindRow>)> {
    let parsed = Trace::from_json(&read_file(input)?)?;
    if let Some(w) = workers.filter(|&w| w < parsed.workers) {
        return Err(usage(format!("trace has worker id {} but --workers is {w}", parsed.workers - 1)));
    }
    let trace = Trace::new(workers.unwrap_or(0), parsed.events);
    let rows = summarize(&trace)?;
    let krows = kind_rows(&trace);
    write_csv(summary, &rows, SummaryRow::HEADER)?;
    write_csv(kinds, &krows, KindRow::HEADER)?;
    Ok((rows, krows))
}

/// Default location of the per-kind CSV next to the summary.
pub fn default_kinds_path(summary: &Path) -> std::path::PathBuf {
    let stem = summary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    summary.with_file_name(format!("{stem}.kinds.csv"))
}
