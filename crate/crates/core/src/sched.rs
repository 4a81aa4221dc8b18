//! Ready-task queues and the dispatch rules of the three scheduling
//! policies. The same state machine drives the threaded runtime and the
//! discrete-event simulator.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Asymmetry-oblivious FIFO over physical lanes.
    Oblivious,
    /// Criticality-aware: critical and non-critical queues plus stealing.
    Cats,
    /// FIFO over virtual cores (fast+slow pairs running dual-lane kernels).
    Vc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Oblivious, PolicyKind::Cats, PolicyKind::Vc];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Oblivious => "oblivious",
            PolicyKind::Cats => "cats",
            PolicyKind::Vc => "vc",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oblivious" => Ok(PolicyKind::Oblivious),
            "cats" => Ok(PolicyKind::Cats),
            "vc" => Ok(PolicyKind::Vc),
            other => Err(invalid(format!("unknown policy `{other}` (expected oblivious, cats or vc)"))),
        }
    }
}

/// Work-stealing direction between the CATS queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stealing {
    None,
    /// Fast workers may take non-critical tasks.
    Uni,
    /// As `Uni`, and slow workers may take critical tasks while no fast worker is idle.
    Bi,
}

impl FromStr for Stealing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Stealing::None),
            "uni" => Ok(Stealing::Uni),
            "bi" => Ok(Stealing::Bi),
            other => Err(invalid(format!("unknown stealing mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    /// A ready task is critical when its bottom level is at least this
    /// fraction of the largest bottom level among ready tasks. CATS only.
    pub cats_threshold: f64,
    pub stealing: Stealing,
}

impl Policy {
    pub const DEFAULT_CATS_THRESHOLD: f64 = 0.9;

    pub fn new(kind: PolicyKind) -> Self {
        Policy { kind, cats_threshold: Self::DEFAULT_CATS_THRESHOLD, stealing: Stealing::Bi }
    }

    pub fn oblivious() -> Self {
        Self::new(PolicyKind::Oblivious)
    }

    pub fn cats(threshold: f64, stealing: Stealing) -> Self {
        Policy { kind: PolicyKind::Cats, cats_threshold: threshold, stealing }
    }

    pub fn vc() -> Self {
        Self::new(PolicyKind::Vc)
    }

    /// Checks that this policy can make progress with the given mix of
    /// execution resources.
    pub fn validate(&self, resources: &[Resource]) -> Result<()> {
        if resources.is_empty() {
            return Err(invalid("at least one worker is required"));
        }
        if !(0.0..=1.0).contains(&self.cats_threshold) {
            return Err(invalid(format!("CATS threshold {} outside [0, 1]", self.cats_threshold)));
        }
        let count = |r: Resource| resources.iter().filter(|&&x| x == r).count();
        let (fast, slow, pairs) = (count(Resource::FastLane), count(Resource::SlowLane), count(Resource::VcPair));
        match self.kind {
            PolicyKind::Vc if pairs != resources.len() => {
                Err(invalid("the VC policy needs fast+slow pair workers only"))
            }
            PolicyKind::Oblivious | PolicyKind::Cats if pairs > 0 => {
                Err(invalid(format!("the {} policy runs on single lanes, not pairs", self.kind)))
            }
            PolicyKind::Cats if fast == 0 && self.stealing != Stealing::Bi => {
                Err(invalid("CATS without bidirectional stealing needs a fast worker"))
            }
            PolicyKind::Cats if slow == 0 && self.stealing == Stealing::None => {
                Err(invalid("CATS without stealing needs a slow worker"))
            }
            _ => Ok(()),
        }
    }
}

/// What a worker executes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resource {
    FastLane,
    SlowLane,
    VcPair,
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    bl: f64,
    id: TaskId,
}

// Max-heap order: larger bottom level first, then smaller id.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bl.total_cmp(&other.bl).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

/// Ready queues for one execution of a task graph.
///
/// Under CATS the ready tasks are kept in one set ordered by bottom level.
/// Criticality is decided at dispatch time: a ready task is critical iff
/// its bottom level is at least `cats_threshold` times the largest bottom
/// level among the tasks ready at that moment. The critical queue is the
/// leading part of the set, the non-critical queue the rest.
#[derive(Debug)]
pub struct ReadyQueues {
    policy: Policy,
    priorities: Vec<f64>,
    fifo: VecDeque<TaskId>,
    ranked: BTreeSet<Reverse<Ranked>>,
    was_critical: Vec<bool>,
}

impl ReadyQueues {
    /// `priorities` holds one bottom level per task; it is only consulted
    /// by CATS and may be empty otherwise.
    pub fn new(policy: Policy, priorities: Vec<f64>) -> Self {
        let n = priorities.len();
        ReadyQueues { policy, priorities, fifo: VecDeque::new(), ranked: BTreeSet::new(), was_critical: vec![false; n] }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Enqueues tasks that became ready together, in id order.
    pub fn push_ready(&mut self, batch: &mut [TaskId]) {
        batch.sort_unstable();
        match self.policy.kind {
            PolicyKind::Oblivious | PolicyKind::Vc => self.fifo.extend(batch.iter().copied()),
            PolicyKind::Cats => {
                for &id in batch.iter() {
                    self.ranked.insert(Reverse(Ranked { bl: self.priorities[id], id }));
                }
            }
        }
    }

    fn cutoff(&self) -> f64 {
        self.ranked.first().map_or(f64::INFINITY, |r| self.policy.cats_threshold * r.0.bl)
    }

    fn pop_critical(&mut self) -> Option<TaskId> {
        let Reverse(head) = self.ranked.pop_first()?;
        self.was_critical[head.id] = true;
        Some(head.id)
    }

    fn pop_noncritical(&mut self) -> Option<TaskId> {
        let cutoff = self.cutoff();
        let pick = self.ranked.iter().find(|r| r.0.bl < cutoff).copied()?;
        self.ranked.remove(&pick);
        Some(pick.0.id)
    }

    /// A task from the worker's own queue, if any.
    pub fn ready_queue_next(&mut self, worker: Resource) -> Option<TaskId> {
        match self.policy.kind {
            PolicyKind::Oblivious | PolicyKind::Vc => self.fifo.pop_front(),
            PolicyKind::Cats => match worker {
                Resource::FastLane => self.pop_critical(),
                Resource::SlowLane => self.pop_noncritical(),
                Resource::VcPair => None,
            },
        }
    }

    /// A task taken from the other CATS queue, subject to the stealing mode.
    /// `fast_worker_idle` tells whether some fast worker is waiting for work.
    pub fn steal(&mut self, worker: Resource, fast_worker_idle: bool) -> Option<TaskId> {
        if self.policy.kind != PolicyKind::Cats {
            return None;
        }
        match (self.policy.stealing, worker) {
            (Stealing::None, _) => None,
            (Stealing::Uni | Stealing::Bi, Resource::FastLane) => self.pop_noncritical(),
            (Stealing::Bi, Resource::SlowLane) if !fast_worker_idle => self.pop_critical(),
            _ => None,
        }
    }

    /// Own queue first, then stealing.
    pub fn next(&mut self, worker: Resource, fast_worker_idle: bool) -> Option<TaskId> {
        self.ready_queue_next(worker).or_else(|| self.steal(worker, fast_worker_idle))
    }

    pub fn len(&self) -> usize {
        self.fifo.len() + self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `id` was dispatched from the critical queue.
    pub fn was_critical(&self, id: TaskId) -> bool {
        self.was_critical.get(id).copied().unwrap_or(false)
    }

    pub fn critical_flags(&self) -> &[bool] {
        &self.was_critical
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_order_and_ties() {
        let mut q = ReadyQueues::new(Policy::oblivious(), vec![]);
        q.push_ready(&mut [5, 2]);
        q.push_ready(&mut [1]);
        let order: Vec<_> = std::iter::from_fn(|| q.next(Resource::SlowLane, false)).collect();
        assert_eq!(order, vec![2, 5, 1]);
    }

    #[test]
    fn single_task_goes_to_any_worker() {
        for r in [Resource::FastLane, Resource::SlowLane] {
            let mut q = ReadyQueues::new(Policy::oblivious(), vec![1.0]);
            q.push_ready(&mut [0]);
            assert_eq!(q.ready_queue_next(r), Some(0));
        }
    }

    #[test]
    fn cats_threshold_one_marks_only_max() {
        let mut q = ReadyQueues::new(Policy::cats(1.0, Stealing::None), vec![3.0, 5.0, 5.0, 1.0]);
        q.push_ready(&mut [0, 1, 2, 3]);
        assert_eq!(q.ready_queue_next(Resource::SlowLane), Some(0));
        assert_eq!(q.ready_queue_next(Resource::FastLane), Some(1));
        assert_eq!(q.ready_queue_next(Resource::FastLane), Some(2));
        assert_eq!(q.critical_flags(), &[false, true, true, false]);
    }

    #[test]
    fn slow_worker_never_sees_critical_without_bi() {
        let mut q = ReadyQueues::new(Policy::cats(0.5, Stealing::None), vec![10.0]);
        q.push_ready(&mut [0]);
        assert_eq!(q.next(Resource::SlowLane, false), None);
        let mut q = ReadyQueues::new(Policy::cats(0.5, Stealing::Uni), vec![10.0]);
        q.push_ready(&mut [0]);
        assert_eq!(q.next(Resource::SlowLane, false), None);
    }

    #[test]
    fn stealing_rules() {
        let mut q = ReadyQueues::new(Policy::cats(0.9, Stealing::None), vec![10.0, 1.0]);
        q.push_ready(&mut [0, 1]);
        assert_eq!(q.steal(Resource::FastLane, false), None);

        let mut q = ReadyQueues::new(Policy::cats(0.9, Stealing::Uni), vec![10.0, 1.0, 2.0]);
        q.push_ready(&mut [0, 1, 2]);
        assert_eq!(q.steal(Resource::FastLane, false), Some(2));

        let mut q = ReadyQueues::new(Policy::cats(0.9, Stealing::Bi), vec![10.0]);
        q.push_ready(&mut [0]);
        assert_eq!(q.steal(Resource::SlowLane, true), None);
        assert_eq!(q.steal(Resource::SlowLane, false), Some(0));
    }

    #[test]
    fn classification_is_relative_to_current_ready_set() {
        let mut q = ReadyQueues::new(Policy::cats(0.9, Stealing::None), vec![10.0, 5.0, 5.2]);
        q.push_ready(&mut [0, 1]);
        // Task 1 is non-critical next to task 0.
        assert_eq!(q.ready_queue_next(Resource::FastLane), Some(0));
        // Once task 0 is gone, task 1 heads the ready set and is critical.
        assert_eq!(q.ready_queue_next(Resource::SlowLane), None);
        q.push_ready(&mut [2]);
        assert_eq!(q.ready_queue_next(Resource::SlowLane), None);
        assert_eq!(q.ready_queue_next(Resource::FastLane), Some(2));
        assert_eq!(q.ready_queue_next(Resource::FastLane), Some(1));
        assert!(q.was_critical(0) && q.was_critical(1) && q.was_critical(2));
    }

    #[test]
    fn validation() {
        use Resource::*;
        assert!(Policy::vc().validate(&[VcPair, VcPair]).is_ok());
        assert!(Policy::vc().validate(&[VcPair, FastLane]).is_err());
        assert!(Policy::oblivious().validate(&[VcPair]).is_err());
        assert!(Policy::oblivious().validate(&[]).is_err());
        assert!(Policy::cats(0.9, Stealing::None).validate(&[FastLane]).is_err());
        assert!(Policy::cats(0.9, Stealing::Uni).validate(&[SlowLane]).is_err());
        assert!(Policy::cats(0.9, Stealing::Bi).validate(&[SlowLane]).is_ok());
        assert!(Policy::cats(1.5, Stealing::Bi).validate(&[FastLane]).is_err());
        assert_eq!("CATS".parse::<PolicyKind>().unwrap(), PolicyKind::Cats);
        assert!("fifo".parse::<PolicyKind>().is_err());
    }

    proptest::proptest! {
        /// Random interleavings of arrivals and requests: slow workers never
        /// receive a critical task unless stealing is bidirectional.
        #[test]
        fn slow_workers_never_get_critical_tasks(
            bls in proptest::collection::vec(0.0f64..100.0, 1..40),
            ops in proptest::collection::vec((0usize..3, 0usize..4), 1..120),
            threshold in 0.0f64..=1.0,
            uni in proptest::bool::ANY,
        ) {
            let stealing = if uni { Stealing::Uni } else { Stealing::None };
            let mut q = ReadyQueues::new(Policy::cats(threshold, stealing), bls.clone());
            let mut next_id = 0;
            let mut taken = 0;
            for (op, arg) in ops {
                match op {
                    0 => {
                        let end = (next_id + arg + 1).min(bls.len());
                        let mut batch: Vec<_> = (next_id..end).collect();
                        next_id = end;
                        q.push_ready(&mut batch);
                    }
                    1 => {
                        if let Some(t) = q.next(Resource::SlowLane, arg % 2 == 0) {
                            proptest::prop_assert!(!q.was_critical(t));
                            taken += 1;
                        }
                    }
                    _ => taken += q.next(Resource::FastLane, false).is_some() as usize,
                }
            }
            proptest::prop_assert_eq!(taken + q.len(), next_id);
        }
    }
}
