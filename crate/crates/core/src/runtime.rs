//! Threaded dataflow execution of a Cholesky task graph.
//!
//! Each worker thread repeatedly takes a ready task from the shared
//! [`ReadyQueues`], runs its kernel on the tiles of the matrix, and releases
//! successors whose remaining-predecessor counter drops to zero. Tiles sit
//! behind `RwLock`s; the dependency edges guarantee the locks are never
//! contended by conflicting tasks.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blis::{self, LaneConfig};
use crate::dense::{potrf_upper_in_place, BlockedMatrix, Matrix};
use crate::error::{invalid, Error, Result};
use crate::graph::{bottom_levels, Task, TaskGraph, TaskKind};
use crate::sched::{Policy, PolicyKind, ReadyQueues, Resource};
use crate::sim::BlockGeometry;
use crate::trace::{Trace, TraceEvent};

/// Called once on each worker thread before it takes work, e.g. to set CPU
/// affinity.
pub type PinHook = Arc<dyn Fn(&WorkerDescriptor) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerDescriptor {
    pub id: usize,
    pub resource: Resource,
    /// Advisory core index for the pin hook.
    pub pin: Option<usize>,
}

impl WorkerDescriptor {
    pub fn new(id: usize, resource: Resource) -> Self {
        WorkerDescriptor { id, resource, pin: None }
    }
}

/// Worker list for a policy: OBLIVIOUS gets `count` fast lanes, CATS splits
/// `count` into fast then slow lanes (fast rounded up), VC gets `count` pairs.
pub fn default_workers(kind: PolicyKind, count: usize) -> Vec<WorkerDescriptor> {
    let fast = count.div_ceil(2);
    (0..count)
        .map(|id| {
            let resource = match kind {
                PolicyKind::Oblivious => Resource::FastLane,
                PolicyKind::Vc => Resource::VcPair,
                PolicyKind::Cats if id < fast => Resource::FastLane,
                PolicyKind::Cats => Resource::SlowLane,
            };
            WorkerDescriptor::new(id, resource)
        })
        .collect()
}

/// Random sleep inside every task body; a test hook for shaking out
/// scheduling races.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jitter {
    pub seed: u64,
    pub max_us: u64,
}

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Lane workers use `lanes.fast` or `lanes.slow` cache parameters; VC
    /// workers run the dual-lane kernels with the whole configuration.
    pub lanes: LaneConfig,
    pub jitter: Option<Jitter>,
    pub pin: Option<PinHook>,
}

/// A failed run: the first error raised by a task plus the events recorded
/// before the remaining work was abandoned.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub trace: Trace,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure { error, trace: Trace::default() }
    }
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} tasks)", self.error, self.trace.events.len())
    }
}

impl std::error::Error for RunFailure {}

struct State {
    queues: ReadyQueues,
    idle_fast: usize,
    done: usize,
    failed: Option<Error>,
}

struct Shared<'a> {
    g: &'a TaskGraph,
    tiles: Vec<RwLock<Matrix>>,
    s: usize,
    b: usize,
    pending: Vec<AtomicUsize>,
    state: Mutex<State>,
    wake: Condvar,
    opts: &'a RunOptions,
    epoch: Instant,
}

impl Shared<'_> {
    fn tile(&self, (i, j): (usize, usize)) -> &RwLock<Matrix> {
        &self.tiles[i + j * self.s]
    }

    fn execute(&self, t: &Task, resource: Resource) -> Result<()> {
        let lanes = &self.opts.lanes;
        let params = match resource {
            Resource::SlowLane => lanes.slow,
            _ => lanes.fast,
        };
        let read = |blk| self.tile(blk).read().expect("tile lock poisoned");
        let mut out = self.tile(t.write).write().expect("tile lock poisoned");
        match t.kind {
            TaskKind::Potrf => potrf_upper_in_place(&mut out, t.k * self.b),
            TaskKind::Trsm => {
                let u = read(t.reads[0]);
                match resource {
                    Resource::VcPair => blis::trsm_asym(&u, &mut out, lanes),
                    _ => blis::trsm_blocked(&u, &mut out, &params),
                }
            }
            TaskKind::Syrk => {
                let a = read(t.reads[0]);
                match resource {
                    Resource::VcPair => blis::syrk_asym(&a, &mut out, lanes),
                    _ => blis::syrk_blocked(&a, &mut out, &params),
                }
            }
            TaskKind::Gemm => {
                let (a, b) = (read(t.reads[0]), read(t.reads[1]));
                match resource {
                    Resource::VcPair => blis::gemm_asym(&a, &b, &mut out, lanes),
                    _ => blis::gemm_blocked(&a, &b, &mut out, &params),
                }
            }
        }
    }

    fn worker(&self, me: WorkerDescriptor) -> Vec<TraceEvent> {
        if let Some(pin) = &self.opts.pin {
            pin(&me);
        }
        let mut rng = self.opts.jitter.map(|j| (ChaCha8Rng::seed_from_u64(j.seed ^ (me.id as u64) << 32), j.max_us));
        let mut events = Vec::new();
        let n = self.g.len();
        loop {
            let task = {
                let mut st = self.state.lock().expect("scheduler lock poisoned");
                loop {
                    if st.failed.is_some() || st.done == n {
                        return events;
                    }
                    let fast_idle = st.idle_fast > 0;
                    if let Some(t) = st.queues.next(me.resource, fast_idle) {
                        if !st.queues.is_empty() {
                            self.wake.notify_all();
                        }
                        break t;
                    }
                    let fast = me.resource == Resource::FastLane;
                    st.idle_fast += fast as usize;
                    st = self.wake.wait(st).expect("scheduler lock poisoned");
                    st.idle_fast -= fast as usize;
                }
            };
            let t = self.g.task(task);
            let start = self.epoch.elapsed();
            if let Some((rng, max_us)) = rng.as_mut() {
                std::thread::sleep(Duration::from_micros(rng.gen_range(0..=*max_us)));
            }
            let outcome = self.execute(t, me.resource);
            let end = self.epoch.elapsed();
            events.push(TraceEvent {
                worker: me.id,
                task,
                kind: t.kind,
                k: t.k,
                i: t.i,
                j: t.j,
                start_ns: start.as_nanos() as u64,
                end_ns: end.as_nanos() as u64,
            });
            let mut released: Vec<_> = self
                .g
                .successors(task)
                .iter()
                .copied()
                .filter(|&s| self.pending[s].fetch_sub(1, Ordering::AcqRel) == 1)
                .collect();
            let mut st = self.state.lock().expect("scheduler lock poisoned");
            match outcome {
                Ok(()) => {
                    st.done += 1;
                    st.queues.push_ready(&mut released);
                }
                Err(e) => {
                    st.failed.get_or_insert(e);
                }
            }
            self.wake.notify_all();
        }
    }
}

/// Factors `m` in place by executing `g` under `policy` on `workers`.
/// Worker ids must be `0..workers.len()` in order.
pub fn run(
    g: &TaskGraph,
    m: BlockedMatrix,
    policy: &Policy,
    workers: &[WorkerDescriptor],
    opts: &RunOptions,
) -> std::result::Result<(BlockedMatrix, Trace), RunFailure> {
    let resources: Vec<_> = workers.iter().map(|w| w.resource).collect();
    policy.validate(&resources)?;
    opts.lanes.validate()?;
    if let Some((pos, w)) = workers.iter().enumerate().find(|(p, w)| w.id != *p) {
        return Err(invalid(format!("worker at position {pos} has id {}", w.id)).into());
    }
    let (n, b, s) = (m.order(), m.block_size(), m.block_count());
    if g.block_span() > s {
        return Err(invalid(format!("graph spans {} block rows, matrix has {s}", g.block_span())).into());
    }

    let priorities = match policy.kind {
        PolicyKind::Cats => {
            let geo = BlockGeometry { n, b };
            bottom_levels(g, |t| geo.flops(t))
        }
        _ => Vec::new(),
    };
    let mut queues = ReadyQueues::new(*policy, priorities);
    let mut initial: Vec<_> = (0..g.len()).filter(|&t| g.indegree(t) == 0).collect();
    queues.push_ready(&mut initial);

    let shared = Shared {
        g,
        tiles: m.into_blocks().into_iter().map(RwLock::new).collect(),
        s,
        b,
        pending: (0..g.len()).map(|t| AtomicUsize::new(g.indegree(t))).collect(),
        state: Mutex::new(State { queues, idle_fast: 0, done: 0, failed: None }),
        wake: Condvar::new(),
        opts,
        epoch: Instant::now(),
    };

    let events: Vec<TraceEvent> = std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter()
            .map(|&w| {
                let sh = &shared;
                scope.spawn(move || sh.worker(w))
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    let trace = Trace::new(workers.len(), events);
    let state = shared.state.into_inner().expect("scheduler lock poisoned");
    if let Some(error) = state.failed {
        return Err(RunFailure { error, trace });
    }
    let tiles = shared.tiles.into_iter().map(|t| t.into_inner().expect("tile lock poisoned")).collect();
    let factored = BlockedMatrix::from_blocks(n, b, tiles)?;
    Ok((factored, trace))
}

/// Cholesky rate `n³/3` flops per `seconds`, in GFLOPS.
pub fn gflops(n: usize, seconds: f64) -> Result<f64> {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err(invalid(format!("elapsed time must be positive, got {seconds}")));
    }
    Ok(crate::sim::gflops_for(n, seconds))
}
