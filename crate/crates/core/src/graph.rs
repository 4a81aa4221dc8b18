//! Task graphs built by replaying a sequential program and tracking, per
//! block, the last writer and the readers since that write. The blocked
//! right-looking upper Cholesky is the generator shipped here; the builder
//! is public so arbitrary graphs can be assembled by hand.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type TaskId = usize;

/// Tile coordinate `(row, col)` in the block grid.
pub type Block = (usize, usize);

/// The four kernels of the blocked Cholesky factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    /// Cholesky factorization of a diagonal block (`potrf`).
    #[serde(rename = "C")]
    Potrf,
    /// Triangular solve of a panel block (`trsm`).
    #[serde(rename = "T")]
    Trsm,
    /// Symmetric rank-`b` update of a diagonal block (`syrk`).
    #[serde(rename = "S")]
    Syrk,
    /// General update of an off-diagonal block (`gemm`).
    #[serde(rename = "G")]
    Gemm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Potrf, TaskKind::Trsm, TaskKind::Syrk, TaskKind::Gemm];

    pub fn letter(self) -> char {
        match self {
            TaskKind::Potrf => 'C',
            TaskKind::Trsm => 'T',
            TaskKind::Syrk => 'S',
            TaskKind::Gemm => 'G',
        }
    }

    pub fn from_letter(c: char) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.letter() == c)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A kernel instance. `(i, j)` is the block it updates and `k` the
/// iteration of the outer loop that issued it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub kind: TaskKind,
    pub k: usize,
    pub i: usize,
    pub j: usize,
    /// Input-only blocks.
    pub reads: Vec<Block>,
    /// The single block written (in-out).
    pub write: Block,
}

/// Incremental DAG construction; see [`GraphBuilder::register_task`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    tasks: Vec<Task>,
    edges: BTreeSet<(TaskId, TaskId)>,
    last_writer: HashMap<Block, TaskId>,
    readers: HashMap<Block, Vec<TaskId>>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a task that reads `reads` and reads-and-writes `write`, and
    /// adds edges for read-after-write, write-after-write and
    /// write-after-read hazards.
    pub fn register_task(
        &mut self,
        kind: TaskKind,
        (k, i, j): (usize, usize, usize),
        reads: &[Block],
        write: Block,
    ) -> TaskId {
        let id = self.tasks.len();
        let mut preds = BTreeSet::new();
        for blk in reads.iter().chain(std::iter::once(&write)) {
            if let Some(&w) = self.last_writer.get(blk) {
                preds.insert(w);
            }
        }
        if let Some(rs) = self.readers.get_mut(&write) {
            preds.extend(rs.drain(..));
        }
        self.edges.extend(preds.into_iter().map(|p| (p, id)));
        self.last_writer.insert(write, id);
        for &blk in reads {
            if blk != write {
                self.readers.entry(blk).or_default().push(id);
            }
        }
        self.tasks.push(Task { id, kind, k, i, j, reads: reads.to_vec(), write });
        id
    }

    pub fn finish(self) -> TaskGraph {
        TaskGraph::from_parts(self.tasks, self.edges.into_iter().collect())
            .expect("builder only produces forward edges")
    }
}

/// Immutable dependency graph. Tasks are in sequential program order and
/// every edge points from a lower to a higher id, so id order is a
/// topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    edges: Vec<(TaskId, TaskId)>,
    succs: Vec<Vec<TaskId>>,
    preds: Vec<Vec<TaskId>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    tasks: Vec<Task>,
    edges: Vec<(TaskId, TaskId)>,
}

impl TaskGraph {
    /// Validates and indexes a task list plus edge list. Ids must equal
    /// positions and edges must go forward; duplicates are dropped.
    pub fn from_parts(tasks: Vec<Task>, edges: Vec<(TaskId, TaskId)>) -> Result<Self> {
        let n = tasks.len();
        if let Some(t) = tasks.iter().enumerate().find(|(pos, t)| t.id != *pos) {
            return Err(invalid(format!("task at position {} has id {}", t.0, t.1.id)));
        }
        let edges: Vec<_> = edges.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for &(p, q) in &edges {
            if p >= q || q >= n {
                return Err(invalid(format!("edge ({p},{q}) is not a forward edge among {n} tasks")));
            }
            succs[p].push(q);
            preds[q].push(p);
        }
        Ok(TaskGraph { tasks, edges, succs, preds })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id]
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Sorted, deduplicated `(pred, succ)` pairs.
    pub fn edges(&self) -> &[(TaskId, TaskId)] {
        &self.edges
    }

    pub fn successors(&self, id: TaskId) -> &[TaskId] {
        &self.succs[id]
    }

    pub fn predecessors(&self, id: TaskId) -> &[TaskId] {
        &self.preds[id]
    }

    pub fn indegree(&self, id: TaskId) -> usize {
        self.preds[id].len()
    }

    pub fn counts(&self) -> TaskCounts {
        let mut c = TaskCounts::default();
        for t in &self.tasks {
            *c.get_mut(t.kind) += 1;
        }
        c
    }

    /// Largest block index mentioned by any task, plus one.
    pub fn block_span(&self) -> usize {
        self.tasks.iter().flat_map(|t| [t.k, t.i, t.j]).max().map_or(0, |m| m + 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphJson { tasks: self.tasks.clone(), edges: self.edges.clone() })
            .expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GraphJson = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        TaskGraph::from_parts(g.tasks, g.edges)
    }

    /// DOT digraph; one node per task in id order, one line per edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cholesky {\n");
        for t in &self.tasks {
            writeln!(out, "  t{} [label=\"{}{}{} k={}\"];", t.id, t.kind, t.i, t.j, t.k).unwrap();
        }
        for (p, q) in &self.edges {
            writeln!(out, "  t{p} -> t{q};").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Replays the right-looking blocked upper Cholesky on an `s × s` tile grid:
///
/// ```text
/// for k in 0..s:
///     C: A[k][k] = chol(A[k][k])
///     for j in k+1..s:  T: A[k][j] = A[k][k]⁻ᵀ A[k][j]
///     for i in k+1..s:
///         S: A[i][i] -= A[k][i]ᵀ A[k][i]
///         for j in i+1..s:  G: A[i][j] -= A[k][i]ᵀ A[k][j]
/// ```
pub fn build_cholesky_dag(s: usize) -> Result<TaskGraph> {
    if s == 0 {
        return Err(invalid("block count must be at least 1"));
    }
    let mut b = GraphBuilder::new();
    for k in 0..s {
        b.register_task(TaskKind::Potrf, (k, k, k), &[], (k, k));
        for j in k + 1..s {
            b.register_task(TaskKind::Trsm, (k, k, j), &[(k, k)], (k, j));
        }
        for i in k + 1..s {
            b.register_task(TaskKind::Syrk, (k, i, i), &[(k, i)], (i, i));
            for j in i + 1..s {
                b.register_task(TaskKind::Gemm, (k, i, j), &[(k, i), (k, j)], (i, j));
            }
        }
    }
    Ok(b.finish())
}

/// Number of tasks of each kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub potrf: usize,
    pub trsm: usize,
    pub syrk: usize,
    pub gemm: usize,
}

impl TaskCounts {
    pub fn total(&self) -> usize {
        self.potrf + self.trsm + self.syrk + self.gemm
    }

    pub fn get(&self, kind: TaskKind) -> usize {
        match kind {
            TaskKind::Potrf => self.potrf,
            TaskKind::Trsm => self.trsm,
            TaskKind::Syrk => self.syrk,
            TaskKind::Gemm => self.gemm,
        }
    }

    fn get_mut(&mut self, kind: TaskKind) -> &mut usize {
        match kind {
            TaskKind::Potrf => &mut self.potrf,
            TaskKind::Trsm => &mut self.trsm,
            TaskKind::Syrk => &mut self.syrk,
            TaskKind::Gemm => &mut self.gemm,
        }
    }
}

/// Closed-form task counts of the Cholesky DAG for `s` block rows.
pub fn task_counts(s: usize) -> Result<TaskCounts> {
    if s == 0 {
        return Err(invalid("block count must be at least 1"));
    }
    Ok(TaskCounts {
        potrf: s,
        trsm: s * (s - 1) / 2,
        syrk: s * (s - 1) / 2,
        gemm: s * (s - 1) * (s.saturating_sub(2)) / 6,
    })
}

/// Longest weighted path from each task to a sink, inclusive of the task.
pub fn bottom_levels(g: &TaskGraph, cost: impl Fn(&Task) -> f64) -> Vec<f64> {
    let mut bl = vec![0.0; g.len()];
    for t in g.tasks().iter().rev() {
        let tail = g.successors(t.id).iter().map(|&s| bl[s]).fold(0.0, f64::max);
        bl[t.id] = cost(t) + tail;
    }
    bl
}

/// Length of the longest weighted path.
pub fn critical_path(g: &TaskGraph, cost: impl Fn(&Task) -> f64) -> f64 {
    bottom_levels(g, cost).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(_: &Task) -> f64 {
        1.0
    }

    fn chain(n: usize) -> TaskGraph {
        let mut b = GraphBuilder::new();
        for t in 0..n {
            b.register_task(TaskKind::Gemm, (t, 0, 0), &[], (0, 0));
        }
        b.finish()
    }

    #[test]
    fn hazard_edges() {
        let mut b = GraphBuilder::new();
        let w1 = b.register_task(TaskKind::Gemm, (0, 0, 0), &[], (0, 0));
        let w2 = b.register_task(TaskKind::Gemm, (1, 0, 0), &[], (0, 0));
        assert_eq!(b.finish().edges(), &[(w1, w2)]);

        let mut b = GraphBuilder::new();
        let w = b.register_task(TaskKind::Potrf, (0, 0, 0), &[], (0, 0));
        let r = b.register_task(TaskKind::Trsm, (0, 0, 1), &[(0, 0)], (0, 1));
        assert_eq!(b.finish().edges(), &[(w, r)]);

        let mut b = GraphBuilder::new();
        b.register_task(TaskKind::Trsm, (0, 0, 1), &[(5, 5)], (0, 1));
        b.register_task(TaskKind::Trsm, (0, 0, 2), &[(5, 5)], (0, 2));
        assert!(b.finish().edges().is_empty());

        // write after read
        let mut b = GraphBuilder::new();
        let r = b.register_task(TaskKind::Trsm, (0, 0, 1), &[(5, 5)], (0, 1));
        let w = b.register_task(TaskKind::Potrf, (5, 5, 5), &[], (5, 5));
        assert_eq!(b.finish().edges(), &[(r, w)]);
    }

    #[test]
    fn small_cholesky_graphs() {
        let g = build_cholesky_dag(1).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.edges().is_empty());

        let g = build_cholesky_dag(3).unwrap();
        assert_eq!(g.counts(), TaskCounts { potrf: 3, trsm: 3, syrk: 3, gemm: 1 });

        let g = build_cholesky_dag(4).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.counts(), TaskCounts { potrf: 4, trsm: 6, syrk: 6, gemm: 4 });
        assert!(build_cholesky_dag(0).is_err());
    }

    #[test]
    fn closed_form_counts() {
        assert_eq!(task_counts(1).unwrap(), TaskCounts { potrf: 1, trsm: 0, syrk: 0, gemm: 0 });
        assert_eq!(task_counts(4).unwrap(), TaskCounts { potrf: 4, trsm: 6, syrk: 6, gemm: 4 });
        let c = task_counts(14).unwrap();
        assert_eq!(c, TaskCounts { potrf: 14, trsm: 91, syrk: 91, gemm: 364 });
        assert_eq!(c.total(), 560);
        assert!(task_counts(0).is_err());
    }

    #[test]
    fn bottom_level_examples() {
        assert_eq!(bottom_levels(&chain(3), unit), vec![3.0, 2.0, 1.0]);
        assert_eq!(critical_path(&chain(3), unit), 3.0);

        let mut b = GraphBuilder::new();
        b.register_task(TaskKind::Potrf, (0, 0, 0), &[], (0, 0));
        b.register_task(TaskKind::Trsm, (0, 0, 1), &[(0, 0)], (0, 1));
        b.register_task(TaskKind::Trsm, (0, 0, 2), &[(0, 0)], (0, 2));
        assert_eq!(bottom_levels(&b.finish(), unit)[0], 2.0);

        let g = build_cholesky_dag(4).unwrap();
        assert_eq!(critical_path(&g, unit), 10.0);
        assert_eq!(critical_path(&chain(1), |_| 7.5), 7.5);
    }

    #[test]
    fn dot_export() {
        let dot = build_cholesky_dag(1).unwrap().to_dot();
        assert_eq!(dot.matches("label").count(), 1);
        assert!(!dot.contains("->"));
        let g = build_cholesky_dag(4).unwrap();
        let dot = g.to_dot();
        assert_eq!(dot.matches("label").count(), 20);
        assert_eq!(dot.matches("->").count(), g.edges().len());
        assert_eq!(dot, build_cholesky_dag(4).unwrap().to_dot());
        assert!(dot.contains("t0 [label=\"C00 k=0\"]"));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let g = build_cholesky_dag(5).unwrap();
        assert_eq!(TaskGraph::from_json(&g.to_json()).unwrap(), g);
        assert!(matches!(TaskGraph::from_json("{\"tasks\": ["), Err(Error::Parse(_))));
        let t = g.task(0).clone();
        assert!(TaskGraph::from_parts(vec![t.clone(), Task { id: 1, ..t }], vec![(1, 0)]).is_err());
    }
}
