//! Host-thread execution of block-parallel IDA*.
//!
//! Each block becomes a group of OS threads sharing one [`ConcurrentStack`].
//! Groups pull roots from a shared queue, so the schedule is whatever the OS
//! makes of it; only the search results (costs, all-solutions counts and
//! paths) are required to match the deterministic machine.
//!
//! The stack stamps every operation with its position in the lock order.
//! Those stamps are the linearization witness that [`check_history`]
//! validates against a sequential stack.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::bpida::BlockParallelConfig;
use crate::error::{Error, Result};
use crate::puzzle::{Domain, Instance, Operator};
use crate::rootset::{create_root_set_in, RootEntry, RootSet};
use crate::search::{Mode, Path, SearchNode};
use crate::simt::StepCounters;
use crate::thread_parallel::{iterate, Launch, ParallelOutcome};

struct Inner<T> {
    entries: Vec<T>,
    /// Entries popped whose children have not been put back yet.
    in_flight: usize,
    next_stamp: u64,
}

/// Bounded, mutex-protected LIFO with linearization stamps.
pub struct ConcurrentStack<T> {
    inner: Mutex<Inner<T>>,
    capacity: usize,
}

impl<T> ConcurrentStack<T> {
    pub fn new(capacity: usize) -> ConcurrentStack<T> {
        ConcurrentStack {
            inner: Mutex::new(Inner {
                entries: Vec::new(),
                in_flight: 0,
                next_stamp: 0,
            }),
            capacity,
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner<T>> {
        // A panicking worker poisons the lock; the data itself stays consistent.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Pushes `items` in order as one atomic step. All or nothing: if they do
    /// not fit, nothing is pushed. Also retires `completed` in-flight pops.
    pub fn put_all(&self, items: Vec<T>, completed: usize) -> (u64, Result<()>) {
        let mut g = self.lock();
        let stamp = g.next_stamp;
        g.next_stamp += 1;
        g.in_flight -= completed;
        if g.entries.len() + items.len() > self.capacity {
            return (stamp, Err(Error::StackOverflow { capacity: self.capacity }));
        }
        g.entries.extend(items);
        (stamp, Ok(()))
    }

    pub fn put(&self, item: T) -> (u64, Result<()>) {
        self.put_all(vec![item], 0)
    }

    /// Pops up to `max` entries, topmost first, and marks them in flight.
    pub fn pop_batch(&self, max: usize, out: &mut Vec<T>) -> u64 {
        let mut g = self.lock();
        let stamp = g.next_stamp;
        g.next_stamp += 1;
        out.clear();
        for _ in 0..max {
            match g.entries.pop() {
                Some(e) => out.push(e),
                None => break,
            }
        }
        g.in_flight += out.len();
        stamp
    }

    /// Retires in-flight pops that produced nothing to put back.
    pub fn retire(&self, completed: usize) {
        self.lock().in_flight -= completed;
    }

    /// True when nothing is stacked and no popped entry is still being expanded.
    pub fn quiescent(&self) -> bool {
        let g = self.lock();
        g.entries.is_empty() && g.in_flight == 0
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One completed operation of a recorded history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryOp {
    pub thread: usize,
    pub kind: OpKind,
    /// Global clock read before the call.
    pub invoke: u64,
    /// Global clock read after the call returned.
    pub respond: u64,
    /// Position in the stack's lock order.
    pub stamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    /// `ok` is false when the put was refused for lack of space.
    Put { values: Vec<u64>, ok: bool },
    Pop { max: usize, got: Vec<u64> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub reason: String,
}

/// Applies one operation to a sequential stack; returns false if the
/// recorded result disagrees with the sequential specification.
fn apply_sequential(stack: &mut Vec<u64>, capacity: usize, kind: &OpKind) -> bool {
    match kind {
        OpKind::Put { values, ok } => {
            let fits = stack.len() + values.len() <= capacity;
            if fits {
                stack.extend(values);
            }
            fits == *ok
        }
        OpKind::Pop { max, got } => {
            let k = (*max).min(stack.len());
            let expect: Vec<u64> = stack.iter().rev().take(k).copied().collect();
            stack.truncate(stack.len() - k);
            expect == *got
        }
    }
}

/// Checks a history against a sequential bounded stack using the recorded
/// stamps as the candidate linearization: the stamp order must replay
/// correctly and must respect real-time order (an operation that returned
/// before another was invoked has the smaller stamp).
pub fn check_history(history: &[HistoryOp], capacity: usize) -> std::result::Result<(), Violation> {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by_key(|&i| history[i].stamp);
    for w in order.windows(2) {
        if history[w[0]].stamp == history[w[1]].stamp {
            return Err(Violation {
                index: w[1],
                reason: "duplicate stamp".into(),
            });
        }
    }
    let mut stack = Vec::new();
    for &i in &order {
        if !apply_sequential(&mut stack, capacity, &history[i].kind) {
            return Err(Violation {
                index: i,
                reason: format!("result differs from the sequential stack: {:?}", history[i].kind),
            });
        }
    }
    // Scanning stamps from last to first, track the earliest response among
    // later-stamped ops; it must not precede this op's invocation.
    let mut min_respond = u64::MAX;
    for &i in order.iter().rev() {
        if min_respond < history[i].invoke {
            return Err(Violation {
                index: i,
                reason: "stamp order contradicts real-time order".into(),
            });
        }
        min_respond = min_respond.min(history[i].respond);
    }
    Ok(())
}

/// Exhaustive search for any legal linearization (Wing and Gong). Exponential;
/// meant for histories of a dozen operations or fewer.
pub fn brute_force_linearizable(history: &[HistoryOp], capacity: usize) -> bool {
    fn go(history: &[HistoryOp], capacity: usize, done: &mut Vec<bool>, stack: &mut Vec<u64>, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        // An op may go next only if no pending op responded before it was invoked.
        let earliest = history
            .iter()
            .zip(done.iter())
            .filter(|(_, &d)| !d)
            .map(|(h, _)| h.respond)
            .min()
            .unwrap_or(u64::MAX);
        for i in 0..history.len() {
            if done[i] || history[i].invoke > earliest {
                continue;
            }
            let saved = stack.clone();
            if apply_sequential(stack, capacity, &history[i].kind) {
                done[i] = true;
                if go(history, capacity, done, stack, left - 1) {
                    return true;
                }
                done[i] = false;
            }
            *stack = saved;
        }
        false
    }
    let mut done = vec![false; history.len()];
    go(history, capacity, &mut done, &mut Vec::new(), history.len())
}

/// Randomized concurrent workload on one stack; returns the recorded history.
/// Values pushed are unique, so every pop result is attributable.
pub fn stress_history(threads: usize, ops_per_thread: usize, capacity: usize, max_batch: usize, seed: u64) -> Vec<HistoryOp> {
    use rand::{Rng, SeedableRng};
    let stack = ConcurrentStack::<u64>::new(capacity);
    let clock = AtomicU64::new(0);
    let mut logs: Vec<Vec<HistoryOp>> = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let stack = &stack;
                let clock = &clock;
                s.spawn(move || {
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let mut log = Vec::with_capacity(ops_per_thread);
                    let mut next_value = (t as u64) << 40;
                    let mut buf = Vec::new();
                    for _ in 0..ops_per_thread {
                        let n = rng.gen_range(1..=max_batch);
                        let invoke = clock.fetch_add(1, Ordering::SeqCst);
                        let (stamp, kind) = if rng.gen_bool(0.5) {
                            let values: Vec<u64> = (0..n as u64).map(|i| next_value + i).collect();
                            next_value += n as u64;
                            let (stamp, r) = stack.put_all(values.clone(), 0);
                            (stamp, OpKind::Put { values, ok: r.is_ok() })
                        } else {
                            let stamp = stack.pop_batch(n, &mut buf);
                            stack.retire(buf.len());
                            (stamp, OpKind::Pop { max: n, got: buf.clone() })
                        };
                        let respond = clock.fetch_add(1, Ordering::SeqCst);
                        log.push(HistoryOp {
                            thread: t,
                            kind,
                            invoke,
                            respond,
                            stamp,
                        });
                    }
                    log
                })
            })
            .collect();
        for h in handles {
            logs.push(h.join().expect("stress worker panicked"));
        }
    });
    logs.into_iter().flatten().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExecutorConfig {
    /// Worker groups, each standing in for one block with its own stack.
    pub groups: usize,
    pub workers_per_group: usize,
    /// Nodes a worker pops at once.
    pub pop_batch: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            groups: 4,
            workers_per_group: 2,
            pop_batch: 4,
        }
    }
}

struct PathLink {
    op: Operator,
    parent: Option<Arc<PathLink>>,
}

#[derive(Clone)]
struct Task {
    node: SearchNode,
    root: u32,
    link: Option<Arc<PathLink>>,
}

fn path_of(task: &Task, roots: &[RootEntry]) -> Path {
    let mut rev = Vec::new();
    let mut cur = task.link.as_ref();
    while let Some(l) = cur {
        rev.push(l.op);
        cur = l.parent.as_ref();
    }
    let mut p = roots[task.root as usize].path.clone();
    p.extend(rev.iter().rev());
    p
}

struct Iteration<'a> {
    domain: &'a Domain,
    roots: &'a [RootEntry],
    limit: u32,
    mode: Mode,
    fifo: Mutex<VecDeque<u32>>,
    stop: AtomicBool,
    f_next: AtomicU32,
    root_loads: Vec<AtomicU64>,
    solutions: Mutex<Vec<Path>>,
    error: Mutex<Option<Error>>,
}

impl<'a> Iteration<'a> {
    fn fail(&self, e: Error) {
        let mut slot = self.error.lock().unwrap_or_else(|p| p.into_inner());
        slot.get_or_insert(e);
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Runs one worker of a group until its group has no work left.
    fn work(&self, stack: &ConcurrentStack<Task>, batch: usize, expanded: &AtomicU64, generated: &AtomicU64) {
        let mut popped = Vec::with_capacity(batch);
        let mut children = Vec::with_capacity(batch * Operator::COUNT);
        while !self.stop.load(Ordering::Relaxed) {
            stack.pop_batch(batch, &mut popped);
            if popped.is_empty() {
                if !stack.quiescent() {
                    std::thread::yield_now();
                    continue;
                }
                let next = self.fifo.lock().unwrap_or_else(|p| p.into_inner()).pop_front();
                let Some(r) = next else { return };
                let root = &self.roots[r as usize];
                if root.node.f() > self.limit {
                    continue;
                }
                let task = Task {
                    node: root.node,
                    root: r,
                    link: None,
                };
                if let (_, Err(e)) = stack.put(task) {
                    self.fail(e);
                }
                continue;
            }
            children.clear();
            for task in &popped {
                expanded.fetch_add(1, Ordering::Relaxed);
                self.root_loads[task.root as usize].fetch_add(1, Ordering::Relaxed);
                if self.domain.is_goal(&task.node.state) {
                    self.solutions.lock().unwrap_or_else(|p| p.into_inner()).push(path_of(task, self.roots));
                    if self.mode == Mode::FirstSolution {
                        self.stop.store(true, Ordering::SeqCst);
                    }
                    continue;
                }
                for op in Operator::ALL {
                    let Some(child) = task.node.child(self.domain, op) else { continue };
                    generated.fetch_add(1, Ordering::Relaxed);
                    let f = child.f();
                    if f <= self.limit {
                        children.push(Task {
                            node: child,
                            root: task.root,
                            link: Some(Arc::new(PathLink {
                                op,
                                parent: task.link.clone(),
                            })),
                        });
                    } else {
                        self.f_next.fetch_min(f, Ordering::Relaxed);
                    }
                }
            }
            if let (_, Err(e)) = stack.put_all(std::mem::take(&mut children), popped.len()) {
                self.fail(e);
            }
        }
    }
}

fn launch_threads(domain: &Domain, roots: &RootSet, limit: u32, mode: Mode, stack_capacity: usize, ex: &ExecutorConfig) -> Result<Launch> {
    let entries = roots.entries();
    let it = Iteration {
        domain,
        roots: entries,
        limit,
        mode,
        fifo: Mutex::new((0..entries.len() as u32).collect()),
        stop: AtomicBool::new(false),
        f_next: AtomicU32::new(u32::MAX),
        root_loads: (0..entries.len()).map(|_| AtomicU64::new(0)).collect(),
        solutions: Mutex::new(Vec::new()),
        error: Mutex::new(None),
    };
    let stacks: Vec<ConcurrentStack<Task>> = (0..ex.groups).map(|_| ConcurrentStack::new(stack_capacity)).collect();
    let expanded: Vec<AtomicU64> = (0..ex.groups).map(|_| AtomicU64::new(0)).collect();
    let generated = AtomicU64::new(0);
    std::thread::scope(|s| {
        for (g, stack) in stacks.iter().enumerate() {
            for _ in 0..ex.workers_per_group {
                let (it, exp, gen) = (&it, &expanded[g], &generated);
                s.spawn(move || it.work(stack, ex.pop_batch.max(1), exp, gen));
            }
        }
    });
    if let Some(e) = it.error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let per_worker: Vec<u64> = expanded.iter().map(|a| a.load(Ordering::Relaxed)).collect();
    let f = it.f_next.load(Ordering::Relaxed);
    Ok(Launch {
        counters: StepCounters {
            per_lane_expansions: per_worker.clone(),
            ..StepCounters::default()
        },
        solutions: it.solutions.into_inner().unwrap_or_else(|p| p.into_inner()),
        f_next: (f != u32::MAX).then_some(f),
        per_worker,
        per_root: it.root_loads.iter().map(|a| a.load(Ordering::Relaxed)).collect(),
        generated: generated.load(Ordering::Relaxed),
        repetitions: 0,
        rebalances: Vec::new(),
    })
}

/// Block-parallel IDA* on host threads. Uses the same root sets and static
/// rebalancing as the machine version, with expansions as the load measure.
pub fn run_bpida_threads(instance: &Instance, mode: Mode, cfg: &BlockParallelConfig, ex: &ExecutorConfig) -> Result<ParallelOutcome> {
    run_bpida_threads_in(&instance.domain(), instance, mode, cfg, ex)
}

pub fn run_bpida_threads_in(
    domain: &Domain,
    instance: &Instance,
    mode: Mode,
    cfg: &BlockParallelConfig,
    ex: &ExecutorConfig,
) -> Result<ParallelOutcome> {
    if ex.groups == 0 || ex.workers_per_group == 0 {
        return Err(Error::Config("executor needs at least one group and one worker".into()));
    }
    let target = (cfg.roots_per_block * cfg.machine.blocks).max(1);
    let roots = create_root_set_in(domain, instance, target, cfg.root_set);
    iterate(domain, roots, mode, cfg.max_limit, true, |roots, limit| {
        launch_threads(domain, roots, limit, mode, cfg.stack_capacity, ex)
    })
}
