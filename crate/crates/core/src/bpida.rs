//! Block-parallel IDA*.
//!
//! A block is one warp. Its lanes share a single OPEN stack: each repetition
//! pops `lanes / 4` nodes at once, lane `i` applies operator `i mod 4` to node
//! `i / 4`, and the surviving children are pushed back in lane order. Blocks
//! take roots from a shared FIFO as they finish, and the number of
//! repetitions spent under each root is the load estimate used to re-split
//! roots between iterations. There is no work stealing.
//!
//! Each repetition costs three instructions: pop with the goal test,
//! successor and heuristic, and the put. Lanes whose node slot is filled are
//! active for all three; operators that are inapplicable or pruned are
//! predicated off rather than branched around.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{Domain, Instance, Operator};
use crate::rootset::{create_root_set_in, RootEntry, RootSet, RootSetConfig};
use crate::search::{fold_min, Mode, Path, SearchNode};
use crate::simt::{run_machine, BlockProgram, MachineConfig, SharedState, Trace, WarpIssue};
use crate::thread_parallel::{iterate, Launch, ParallelOutcome};

pub const DEFAULT_SHARED_STACK_CAPACITY: usize = 4096;

/// Bounded LIFO shared by the lanes of one block.
#[derive(Clone, Debug)]
pub struct SharedStack<T> {
    entries: Vec<T>,
    capacity: usize,
}

impl<T> SharedStack<T> {
    pub fn new(capacity: usize) -> SharedStack<T> {
        SharedStack {
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Pushes one entry; fails rather than drop it when full.
    pub fn put(&mut self, item: T) -> Result<()> {
        if self.entries.len() == self.capacity {
            return Err(Error::StackOverflow { capacity: self.capacity });
        }
        self.entries.push(item);
        Ok(())
    }

    /// Removes up to `lanes / ops` entries from the top into `out`, topmost
    /// first. Node `i` of the batch belongs to lanes `i*ops .. i*ops+ops`.
    pub fn parallel_pop(&mut self, lanes: usize, ops: usize, out: &mut Vec<T>) -> usize {
        assert!(ops > 0 && lanes.is_multiple_of(ops), "lanes must be a multiple of the operator count");
        let k = (lanes / ops).min(self.entries.len());
        out.clear();
        for _ in 0..k {
            out.push(self.entries.pop().expect("k <= len"));
        }
        k
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Link {
    parent: u32,
    op: Operator,
    /// Root index for root entries.
    root: u32,
    refs: u32,
}

/// Reference-counted parent links, so any stacked node can recover its path.
/// A slot lives while its node is unexpanded or any child is alive.
#[derive(Debug)]
struct PathArena {
    slots: Vec<Link>,
    free: Vec<u32>,
    capacity: usize,
}

impl PathArena {
    fn new(capacity: usize) -> PathArena {
        PathArena {
            slots: Vec::new(),
            free: Vec::new(),
            capacity,
        }
    }

    fn alloc(&mut self, link: Link) -> Result<u32> {
        if link.parent != NO_PARENT {
            self.slots[link.parent as usize].refs += 1;
        }
        if let Some(i) = self.free.pop() {
            self.slots[i as usize] = link;
            return Ok(i);
        }
        if self.slots.len() == self.capacity {
            return Err(Error::StackOverflow { capacity: self.capacity });
        }
        self.slots.push(link);
        Ok(self.slots.len() as u32 - 1)
    }

    fn release(&mut self, mut i: u32) {
        while i != NO_PARENT {
            let s = &mut self.slots[i as usize];
            s.refs -= 1;
            if s.refs > 0 {
                return;
            }
            self.free.push(i);
            i = s.parent;
        }
    }

    fn path(&self, mut i: u32, roots: &[RootEntry]) -> Path {
        let mut rev = Vec::new();
        loop {
            let s = self.slots[i as usize];
            if s.parent == NO_PARENT {
                let mut p = roots[s.root as usize].path.clone();
                p.extend(rev.iter().rev());
                return p;
            }
            rev.push(s.op);
            i = s.parent;
        }
    }

    fn live(&self) -> usize {
        self.slots.len() - self.free.len()
    }
}

#[derive(Clone, Copy, Debug)]
struct StackNode {
    node: SearchNode,
    link: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockParallelConfig {
    pub machine: MachineConfig,
    pub stack_capacity: usize,
    /// Path-link slots per block.
    pub arena_capacity: usize,
    /// Roots per block created up front.
    pub roots_per_block: usize,
    pub root_set: RootSetConfig,
    pub max_limit: u32,
}

impl Default for BlockParallelConfig {
    fn default() -> Self {
        BlockParallelConfig {
            machine: MachineConfig::block_parallel(),
            stack_capacity: DEFAULT_SHARED_STACK_CAPACITY,
            arena_capacity: 8 * DEFAULT_SHARED_STACK_CAPACITY,
            roots_per_block: 4,
            root_set: RootSetConfig::default(),
            max_limit: u16::MAX as u32 / 2,
        }
    }
}

struct Shared {
    limit: u32,
    mode: Mode,
    fifo: VecDeque<u32>,
    solutions: Vec<Path>,
    error: Option<Error>,
    root_reps: Vec<u64>,
}

impl SharedState for Shared {
    fn halted(&self) -> bool {
        self.error.is_some() || (self.mode == Mode::FirstSolution && !self.solutions.is_empty())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Fetch,
    Eval,
    Store,
}

struct Block<'a> {
    domain: &'a Domain,
    roots: &'a [RootEntry],
    lanes: usize,
    stack: SharedStack<StackNode>,
    arena: PathArena,
    phase: Phase,
    batch: Vec<StackNode>,
    /// Per batch slot: the node was a goal and is not expanded.
    goal: Vec<bool>,
    children: Vec<Option<SearchNode>>,
    mask: u64,
    root: u32,
    done: bool,
    expanded: u64,
    generated: u64,
    repetitions: u64,
    f_next: Option<u32>,
}

impl<'a> Block<'a> {
    fn lane_mask(n_lanes: usize) -> u64 {
        if n_lanes >= 64 {
            u64::MAX
        } else {
            (1u64 << n_lanes) - 1
        }
    }

    fn fetch(&mut self, shared: &mut Shared) -> Result<WarpIssue> {
        while self.stack.is_empty() {
            let Some(r) = shared.fifo.pop_front() else {
                self.done = true;
                return Ok(WarpIssue::Idle);
            };
            let root = &self.roots[r as usize];
            if root.node.f() > shared.limit {
                continue;
            }
            self.root = r;
            let link = self.arena.alloc(Link {
                parent: NO_PARENT,
                op: Operator::Up,
                root: r,
                refs: 1,
            })?;
            self.stack.put(StackNode { node: root.node, link })?;
        }
        let ops = Operator::COUNT;
        let k = self.stack.parallel_pop(self.lanes, ops, &mut self.batch);
        self.repetitions += 1;
        shared.root_reps[self.root as usize] += 1;
        self.expanded += k as u64;
        self.goal.clear();
        let mut any_open = false;
        for e in &self.batch {
            let g = self.domain.is_goal(&e.node.state);
            if g {
                shared.solutions.push(self.arena.path(e.link, self.roots));
            }
            any_open |= !g;
            self.goal.push(g);
        }
        let mask = Self::lane_mask(k * ops);
        self.mask = 0;
        for (i, &g) in self.goal.iter().enumerate() {
            if !g {
                self.mask |= 0xF << (i * ops);
            }
        }
        if any_open {
            self.phase = Phase::Eval;
        } else {
            self.release_batch();
        }
        Ok(WarpIssue::Issued(mask))
    }

    fn eval(&mut self) {
        let ops = Operator::COUNT;
        self.children.clear();
        for lane in 0..self.batch.len() * ops {
            let slot = lane / ops;
            let child = if self.goal[slot] {
                None
            } else {
                self.batch[slot].node.child(self.domain, Operator::from_index(lane % ops))
            };
            self.children.push(child);
        }
        self.phase = Phase::Store;
    }

    fn store(&mut self, shared: &mut Shared) -> Result<()> {
        let ops = Operator::COUNT;
        for lane in 0..self.children.len() {
            let Some(child) = self.children[lane] else { continue };
            self.generated += 1;
            let f = child.f();
            if f <= shared.limit {
                let parent = self.batch[lane / ops].link;
                let link = self.arena.alloc(Link {
                    parent,
                    op: child.last_op.expect("child has an operator"),
                    root: self.root,
                    refs: 1,
                })?;
                self.stack.put(StackNode { node: child, link })?;
            } else {
                fold_min(&mut self.f_next, f);
            }
        }
        self.release_batch();
        Ok(())
    }

    fn release_batch(&mut self) {
        for e in &self.batch {
            self.arena.release(e.link);
        }
        self.batch.clear();
        self.phase = Phase::Fetch;
    }
}

impl<'a> BlockProgram for Block<'a> {
    type Shared = Shared;

    fn step_warp(&mut self, _warp: usize, shared: &mut Shared) -> WarpIssue {
        if self.done {
            return WarpIssue::Idle;
        }
        let r = match self.phase {
            Phase::Fetch => self.fetch(shared),
            Phase::Eval => {
                self.eval();
                Ok(WarpIssue::Issued(self.mask))
            }
            Phase::Store => self.store(shared).map(|_| WarpIssue::Issued(self.mask)),
        };
        r.unwrap_or_else(|e| {
            shared.error = Some(e);
            self.done = true;
            WarpIssue::Idle
        })
    }

    fn finished(&self, shared: &Shared) -> bool {
        self.done || (self.stack.is_empty() && self.phase == Phase::Fetch && shared.fifo.is_empty())
    }
}

fn launch(
    domain: &Domain,
    roots: &RootSet,
    limit: u32,
    mode: Mode,
    cfg: &BlockParallelConfig,
    trace: Option<&mut Trace<'_>>,
) -> Result<Launch> {
    let m = &cfg.machine;
    let entries = roots.entries();
    let mut blocks: Vec<Block> = (0..m.blocks)
        .map(|_| Block {
            domain,
            roots: entries,
            lanes: m.lanes_per_block,
            stack: SharedStack::new(cfg.stack_capacity),
            arena: PathArena::new(cfg.arena_capacity),
            phase: Phase::Fetch,
            batch: Vec::with_capacity(m.lanes_per_block / Operator::COUNT),
            goal: Vec::new(),
            children: Vec::new(),
            mask: 0,
            root: 0,
            done: false,
            expanded: 0,
            generated: 0,
            repetitions: 0,
            f_next: None,
        })
        .collect();
    let mut shared = Shared {
        limit,
        mode,
        fifo: (0..entries.len() as u32).collect(),
        solutions: Vec::new(),
        error: None,
        root_reps: vec![0; entries.len()],
    };
    let mut counters = run_machine(m, &mut blocks, &mut shared, trace)?;
    if let Some(e) = shared.error {
        return Err(e);
    }
    let mut f_next = None;
    for b in &blocks {
        if let Some(f) = b.f_next {
            fold_min(&mut f_next, f);
        }
        debug_assert!(mode == Mode::FirstSolution || b.arena.live() == 0, "path links leaked");
    }
    let per_worker: Vec<u64> = blocks.iter().map(|b| b.expanded).collect();
    counters.per_lane_expansions = per_worker.clone();
    Ok(Launch {
        counters,
        solutions: shared.solutions,
        f_next,
        per_worker,
        per_root: shared.root_reps,
        generated: blocks.iter().map(|b| b.generated).sum(),
        repetitions: blocks.iter().map(|b| b.repetitions).sum(),
        rebalances: Vec::new(),
    })
}

/// Block-parallel IDA* on the machine, with static rebalancing between
/// iterations driven by repetition counts.
pub fn run_bpida(instance: &Instance, mode: Mode, cfg: &BlockParallelConfig, trace: Option<&mut Trace<'_>>) -> Result<ParallelOutcome> {
    run_bpida_in(&instance.domain(), instance, mode, cfg, trace)
}

/// As [`run_bpida`], searching in `domain` (which may differ from the
/// instance's own, e.g. a fault-injected heuristic).
pub fn run_bpida_in(
    domain: &Domain,
    instance: &Instance,
    mode: Mode,
    cfg: &BlockParallelConfig,
    mut trace: Option<&mut Trace<'_>>,
) -> Result<ParallelOutcome> {
    cfg.machine.validate()?;
    if cfg.machine.lanes_per_block != cfg.machine.warp_size {
        return Err(Error::Config(format!(
            "block-parallel search needs warp-sized blocks: lanes_per_block {} != warp_size {}",
            cfg.machine.lanes_per_block, cfg.machine.warp_size
        )));
    }
    if !cfg.machine.warp_size.is_multiple_of(Operator::COUNT) {
        return Err(Error::Config(format!("warp_size {} is not a multiple of 4", cfg.machine.warp_size)));
    }
    let target = (cfg.roots_per_block * cfg.machine.blocks).max(1);
    let roots = create_root_set_in(domain, instance, target, cfg.root_set);
    iterate(domain, roots, mode, cfg.max_limit, true, |roots, limit| {
        launch(domain, roots, limit, mode, cfg, trace.as_deref_mut())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_pop_examples() {
        let mut s = SharedStack::new(64);
        for i in 0..12 {
            s.put(i).unwrap();
        }
        let mut out = Vec::new();
        assert_eq!(s.parallel_pop(32, 4, &mut out), 8);
        assert_eq!(out, vec![11, 10, 9, 8, 7, 6, 5, 4]);
        let mut s = SharedStack::new(64);
        for i in 0..3 {
            s.put(i).unwrap();
        }
        assert_eq!(s.parallel_pop(32, 4, &mut out), 3);
        // 3 nodes cover 12 lanes; 20 stay masked
        assert_eq!(32 - 4 * out.len(), 20);
    }

    #[test]
    fn put_overflow_is_an_error() {
        let mut s = SharedStack::new(2);
        s.put(1).unwrap();
        s.put(2).unwrap();
        assert!(matches!(s.put(3), Err(Error::StackOverflow { capacity: 2 })));
    }

    #[test]
    fn goal_root_found_first_repetition() {
        let inst = crate::puzzle::parse_instance("0 1 2 3 4 5 6 7 8").unwrap();
        let cfg = BlockParallelConfig {
            machine: MachineConfig {
                blocks: 1,
                ..MachineConfig::block_parallel()
            },
            roots_per_block: 1,
            ..BlockParallelConfig::default()
        };
        let out = run_bpida(&inst, Mode::FirstSolution, &cfg, None).unwrap();
        assert_eq!(out.outcome.cost(), Some(0));
        assert_eq!(out.repetitions(), 1);
    }
}
