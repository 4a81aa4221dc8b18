//! Task-parallel blocked Cholesky on asymmetric multicores.
//!
//! * [`dense`]: matrices, tiling, reference kernels, verification.
//! * [`blis`]: cache-blocked BLAS-3 kernels and their fast+slow dual-lane variants.
//! * [`graph`]: Cholesky task DAG construction and priorities.
//! * [`sched`]: ready queues for the OBLIVIOUS, CATS and VC policies.
//! * [`runtime`]: threaded execution of a task graph over a tiled matrix.
//! * [`sim`]: discrete-event replay on a modeled big.LITTLE machine.
//! * [`trace`]: execution traces and idle/duration statistics.

pub mod blis;
pub mod dense;
pub mod error;
pub mod graph;
pub mod runtime;
pub mod sched;
pub mod sim;
pub mod trace;

pub use blis::{CacheParams, LaneConfig, Loop3Split};
pub use dense::{make_spd, residual, BlockedMatrix, Matrix};
pub use error::{Error, Result};
pub use graph::{build_cholesky_dag, task_counts, Task, TaskCounts, TaskGraph, TaskId, TaskKind};
pub use runtime::{run, RunFailure, RunOptions, WorkerDescriptor};
pub use sched::{Policy, PolicyKind, Resource, Stealing};
pub use sim::{simulate, BlockGeometry, CostModel, MachineModel, SimResult, View};
pub use trace::{Trace, TraceEvent, WorkerStats};
