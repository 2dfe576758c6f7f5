//! Thread-parallel IDA*: one DFS per lane.
//!
//! Three schedulers share one lane program:
//!
//! * `Simple` splits the tree once into one root per lane and never rebalances.
//! * `Static` re-splits heavy roots between iterations using the node counts
//!   measured under each root.
//! * `Full` adds work stealing inside a block during an iteration. Idle lanes
//!   take stack entries from busy lanes when the Powley trigger fires.
//!
//! # Lane cost model
//!
//! A lane runs a loop of micro-steps, each one machine instruction:
//! `FETCH` pops a node and tests it for the goal, then every generated child
//! costs an `EVAL` (successor and heuristic) and a `STORE` (push or fold into
//! `f_next`), and `LOOP_END` closes the loop. A warp issues the lowest program
//! counter among its live lanes, so lanes whose nodes have fewer children wait
//! at `LOOP_END`, and finished lanes stay masked until the launch ends.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{Domain, Instance, Operator};
use crate::rootset::{assign_roots, create_root_set_in, update_root_set, RootEntry, RootSet, RootSetConfig};
use crate::search::{fold_min, IterationStats, Mode, OutcomeKind, Path, SearchNode, SearchOutcome, DEFAULT_STACK_CAPACITY};
use crate::simt::{compute_metrics, load_balance, run_machine, BlockProgram, MachineConfig, Metrics, SharedState, StepCounters, Trace, WarpIssue};

const FETCH: u8 = 0;
const LOOP_END: u8 = 1 + 2 * Operator::COUNT as u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Simple,
    Static,
    Full,
}

/// Counters for the dynamic rebalancing trigger of one block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceState {
    /// Duration of the previous rebalance, in ticks.
    pub l: u64,
    /// Ticks since the previous rebalance finished.
    pub t: u64,
    /// Nodes the block expanded since the previous rebalance.
    pub w: u64,
}

impl BalanceState {
    pub fn threshold(&self) -> f64 {
        let span = self.l + self.t;
        if span == 0 {
            0.0
        } else {
            self.w as f64 / span as f64
        }
    }
}

/// Fires when fewer lanes are running than the expansion rate since the last
/// rebalance, and at least half the last rebalance's duration has passed.
pub fn check_balance_trigger(state: &BalanceState, running_lanes: usize, _total_lanes: usize) -> bool {
    2 * state.t >= state.l && (running_lanes as f64) < state.threshold()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stolen {
    /// An unstarted root, by index into the root set.
    Root(u32),
    /// A stack entry: state key and depth.
    Entry { key: u64, g: u16 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub thief: usize,
    pub donor: usize,
    pub item: Stolen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebalanceEvent {
    pub block: usize,
    /// Block-local tick at which the trigger fired.
    pub tick: u64,
    pub running: usize,
    pub threshold: f64,
    pub state: BalanceState,
    /// Ticks the block is held at the barrier.
    pub duration: u64,
    pub transfers: Vec<Transfer>,
}

/// Fixed barrier cost of one rebalance, in ticks; each moved entry adds one.
pub const REBALANCE_SYNC_TICKS: u64 = 32;

#[derive(Clone, Debug)]
pub struct ThreadParallelConfig {
    pub machine: MachineConfig,
    pub stack_capacity: usize,
    /// Initial root count; defaults to one per lane.
    pub root_target: Option<usize>,
    pub root_set: RootSetConfig,
    /// Entries moved to each idle lane per rebalance.
    pub steal_batch: usize,
    pub max_limit: u32,
}

impl Default for ThreadParallelConfig {
    fn default() -> Self {
        ThreadParallelConfig {
            machine: MachineConfig::default(),
            stack_capacity: DEFAULT_STACK_CAPACITY,
            root_target: None,
            root_set: RootSetConfig::default(),
            steal_batch: 1,
            max_limit: u16::MAX as u32 / 2,
        }
    }
}

/// Everything measured in one f-limited iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub limit: u32,
    pub f_next: Option<u32>,
    /// Nodes popped by lanes.
    pub lane_expansions: u64,
    /// Nodes with `f <= limit` expanded on the host while building the roots.
    pub host_expansions: u64,
    pub generated: u64,
    /// Per worker: lanes for thread-parallel schemes, blocks for block-parallel.
    pub per_worker: Vec<u64>,
    /// Work measured under each root, the input to static rebalancing.
    pub per_root: Vec<u64>,
    pub root_count: usize,
    /// Block-parallel loop iterations; zero for thread-parallel schemes.
    pub repetitions: u64,
    pub counters: StepCounters,
    pub rebalances: Vec<RebalanceEvent>,
}

impl IterationReport {
    pub fn expanded(&self) -> u64 {
        self.lane_expansions + self.host_expansions
    }

    pub fn load_balance(&self) -> Option<f64> {
        load_balance(&self.per_worker)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParallelOutcome {
    pub outcome: SearchOutcome,
    pub iterations: Vec<IterationReport>,
    /// Counters summed over every launch.
    pub counters: StepCounters,
    pub metrics: Metrics,
    pub roots_final: usize,
}

impl ParallelOutcome {
    /// Load balance of the next-to-last iteration (the last one if there is
    /// only one): the final iteration may stop early and says little.
    pub fn reported_load_balance(&self) -> f64 {
        let n = self.iterations.len();
        let it = if n >= 2 { &self.iterations[n - 2] } else { &self.iterations[0] };
        it.load_balance().unwrap_or(1.0)
    }

    pub fn repetitions(&self) -> u64 {
        self.iterations.iter().map(|r| r.repetitions).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Link {
    /// Child of the lane's current path.
    Child,
    /// A root; its path comes from the root set.
    Root,
    /// Moved from another lane; the parent path is stored in the block.
    Stolen(u32),
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    node: SearchNode,
    root: u32,
    link: Link,
}

struct Lane {
    stack: Vec<Entry>,
    pending: VecDeque<u32>,
    path: Path,
    pc: u8,
    current: Entry,
    ops: [Operator; 4],
    n_ops: u8,
    child: Option<SearchNode>,
    expanded: u64,
    generated: u64,
    f_next: Option<u32>,
}

impl Lane {
    fn new(pending: VecDeque<u32>, root: &SearchNode) -> Lane {
        Lane {
            stack: Vec::new(),
            pending,
            path: Vec::new(),
            pc: FETCH,
            current: Entry {
                node: *root,
                root: 0,
                link: Link::Root,
            },
            ops: Operator::ALL,
            n_ops: 0,
            child: None,
            expanded: 0,
            generated: 0,
            f_next: None,
        }
    }

    fn load(&self) -> usize {
        self.stack.len() + self.pending.len()
    }
}

struct Shared {
    limit: u32,
    mode: Mode,
    solutions: Vec<Path>,
    error: Option<Error>,
    root_loads: Vec<u64>,
}

impl SharedState for Shared {
    fn halted(&self) -> bool {
        self.error.is_some() || (self.mode == Mode::FirstSolution && !self.solutions.is_empty())
    }
}

struct LaneBlock<'a> {
    index: usize,
    domain: &'a Domain,
    roots: &'a [RootEntry],
    warp_size: usize,
    stack_capacity: usize,
    lanes: Vec<Lane>,
    /// Per warp: lanes that still have work.
    live: Vec<u64>,
    running: usize,
    dynamic: bool,
    steal_batch: usize,
    balance: BalanceState,
    stall_left: u64,
    stall_now: bool,
    tick: u64,
    prefixes: Vec<Path>,
    events: Vec<RebalanceEvent>,
}

impl<'a> LaneBlock<'a> {
    fn is_live(&self, lane: usize) -> bool {
        self.live[lane / self.warp_size] >> (lane % self.warp_size) & 1 == 1
    }

    fn set_live(&mut self, lane: usize, on: bool) {
        let bit = 1u64 << (lane % self.warp_size);
        let w = &mut self.live[lane / self.warp_size];
        if on {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    /// Moves work from the most loaded lanes to idle ones. Returns the moves.
    fn steal(&mut self) -> Vec<Transfer> {
        let mut transfers = Vec::new();
        for thief in 0..self.lanes.len() {
            if self.is_live(thief) {
                continue;
            }
            for _ in 0..self.steal_batch {
                let donor = (0..self.lanes.len())
                    .filter(|&d| d != thief && self.lanes[d].load() >= 2)
                    .max_by_key(|&d| (self.lanes[d].load(), std::cmp::Reverse(d)));
                let Some(donor) = donor else { break };
                let item = if let Some(r) = self.lanes[donor].pending.pop_back() {
                    self.lanes[thief].pending.push_back(r);
                    Stolen::Root(r)
                } else {
                    let mut e = self.lanes[donor].stack.remove(0);
                    if e.link == Link::Child {
                        let prefix = self.lanes[donor].path[..e.node.g as usize - 1].to_vec();
                        e.link = Link::Stolen(self.prefixes.len() as u32);
                        self.prefixes.push(prefix);
                    }
                    self.lanes[thief].stack.insert(0, e);
                    Stolen::Entry {
                        key: e.node.state.key(),
                        g: e.node.g,
                    }
                };
                transfers.push(Transfer { thief, donor, item });
            }
            if self.lanes[thief].load() > 0 {
                self.lanes[thief].pc = FETCH;
                self.set_live(thief, true);
                self.running += 1;
            }
        }
        transfers
    }

    fn exec(&mut self, lane: usize, shared: &mut Shared) {
        let domain = self.domain;
        let l = &mut self.lanes[lane];
        match l.pc {
            FETCH => {
                let entry = match l.stack.pop() {
                    Some(e) => Some(e),
                    None => loop {
                        let Some(r) = l.pending.pop_front() else { break None };
                        let root = &self.roots[r as usize];
                        // Roots above the limit are accounted for on the host.
                        if root.node.f() <= shared.limit {
                            break Some(Entry {
                                node: root.node,
                                root: r,
                                link: Link::Root,
                            });
                        }
                    },
                };
                let Some(e) = entry else {
                    self.running -= 1;
                    self.set_live(lane, false);
                    return;
                };
                match e.link {
                    Link::Root => l.path.clone_from(&self.roots[e.root as usize].path),
                    Link::Child => l.path.truncate(e.node.g as usize - 1),
                    Link::Stolen(i) => l.path.clone_from(&self.prefixes[i as usize]),
                }
                if e.link != Link::Root {
                    l.path.push(e.node.last_op.expect("non-root entry has an arriving operator"));
                }
                l.expanded += 1;
                shared.root_loads[e.root as usize] += 1;
                self.balance.w += 1;
                l.current = e;
                if domain.is_goal(&e.node.state) {
                    shared.solutions.push(l.path.clone());
                    l.pc = LOOP_END;
                    return;
                }
                let mut n = 0;
                for &op in Operator::ALL.iter().rev() {
                    if domain.allowed(op, e.node.last_op) && domain.step(&e.node.state, op).is_some() {
                        l.ops[n] = op;
                        n += 1;
                    }
                }
                l.n_ops = n as u8;
                l.pc = if n == 0 { LOOP_END } else { 1 };
            }
            LOOP_END => l.pc = FETCH,
            pc if pc % 2 == 1 => {
                let k = (pc - 1) / 2;
                l.child = l.current.node.child(domain, l.ops[k as usize]);
                l.pc = pc + 1;
            }
            pc => {
                let k = (pc - 2) / 2;
                let child = l.child.take().expect("EVAL precedes STORE");
                l.generated += 1;
                let f = child.f();
                if f <= shared.limit {
                    if l.stack.len() == self.stack_capacity {
                        shared.error = Some(Error::StackOverflow {
                            capacity: self.stack_capacity,
                        });
                    } else {
                        l.stack.push(Entry {
                            node: child,
                            root: l.current.root,
                            link: Link::Child,
                        });
                    }
                } else {
                    fold_min(&mut l.f_next, f);
                }
                l.pc = if k + 1 < l.n_ops { pc + 1 } else { LOOP_END };
            }
        }
    }
}

impl<'a> BlockProgram for LaneBlock<'a> {
    type Shared = Shared;

    fn begin_tick(&mut self, _shared: &mut Shared) {
        self.tick += 1;
        self.stall_now = self.stall_left > 0;
        if self.stall_now {
            self.stall_left -= 1;
            return;
        }
        if !self.dynamic {
            return;
        }
        self.balance.t += 1;
        let total = self.lanes.len();
        if self.running == 0 || self.running == total {
            return;
        }
        if !check_balance_trigger(&self.balance, self.running, total) {
            return;
        }
        let running = self.running;
        let state = self.balance;
        let threshold = state.threshold();
        let transfers = self.steal();
        if transfers.is_empty() {
            return;
        }
        let duration = REBALANCE_SYNC_TICKS + transfers.len() as u64;
        self.events.push(RebalanceEvent {
            block: self.index,
            tick: self.tick,
            running,
            threshold,
            state,
            duration,
            transfers,
        });
        self.balance = BalanceState { l: duration, t: 0, w: 0 };
        // This tick is the first of the barrier.
        self.stall_left = duration - 1;
        self.stall_now = true;
    }

    fn step_warp(&mut self, warp: usize, shared: &mut Shared) -> WarpIssue {
        if self.stall_now {
            return WarpIssue::Stall;
        }
        let live = self.live[warp];
        if live == 0 {
            return WarpIssue::Idle;
        }
        let base = warp * self.warp_size;
        let mut min_pc = u8::MAX;
        let mut bits = live;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            min_pc = min_pc.min(self.lanes[base + i].pc);
        }
        let mut mask = 0u64;
        let mut bits = live;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if self.lanes[base + i].pc == min_pc {
                mask |= 1 << i;
                self.exec(base + i, shared);
            }
        }
        WarpIssue::Issued(mask)
    }

    fn finished(&self, _shared: &Shared) -> bool {
        self.running == 0 && self.stall_left == 0
    }
}

/// Per-launch results gathered from a scheme's blocks.
pub(crate) struct Launch {
    pub counters: StepCounters,
    pub solutions: Vec<Path>,
    pub f_next: Option<u32>,
    pub per_worker: Vec<u64>,
    pub per_root: Vec<u64>,
    pub generated: u64,
    pub repetitions: u64,
    pub rebalances: Vec<RebalanceEvent>,
}

#[allow(clippy::too_many_arguments)]
fn launch(
    domain: &Domain,
    roots: &RootSet,
    assignment: &[Vec<usize>],
    limit: u32,
    mode: Mode,
    cfg: &ThreadParallelConfig,
    dynamic: bool,
    trace: Option<&mut Trace<'_>>,
) -> Result<Launch> {
    let m = &cfg.machine;
    let entries = roots.entries();
    let mut blocks: Vec<LaneBlock> = (0..m.blocks)
        .map(|b| {
            let lanes: Vec<Lane> = (0..m.lanes_per_block)
                .map(|i| {
                    let pending = assignment[b * m.lanes_per_block + i].iter().map(|&r| r as u32).collect();
                    Lane::new(pending, &entries[0].node)
                })
                .collect();
            let mut live = vec![0u64; m.warps_per_block()];
            let mut running = 0;
            for (i, lane) in lanes.iter().enumerate() {
                if !lane.pending.is_empty() {
                    live[i / m.warp_size] |= 1 << (i % m.warp_size);
                    running += 1;
                }
            }
            LaneBlock {
                index: b,
                domain,
                roots: entries,
                warp_size: m.warp_size,
                stack_capacity: cfg.stack_capacity,
                lanes,
                live,
                running,
                dynamic,
                steal_batch: cfg.steal_batch,
                balance: BalanceState::default(),
                stall_left: 0,
                stall_now: false,
                tick: 0,
                prefixes: Vec::new(),
                events: Vec::new(),
            }
        })
        .collect();
    let mut shared = Shared {
        limit,
        mode,
        solutions: Vec::new(),
        error: None,
        root_loads: vec![0; entries.len()],
    };
    let mut counters = run_machine(m, &mut blocks, &mut shared, trace)?;
    if let Some(e) = shared.error {
        return Err(e);
    }
    let mut f_next = None;
    let mut generated = 0;
    let mut per_worker = Vec::with_capacity(m.total_lanes());
    let mut rebalances = Vec::new();
    for b in &mut blocks {
        for l in &b.lanes {
            per_worker.push(l.expanded);
            generated += l.generated;
            if let Some(f) = l.f_next {
                fold_min(&mut f_next, f);
            }
        }
        rebalances.append(&mut b.events);
    }
    counters.per_lane_expansions = per_worker.clone();
    Ok(Launch {
        counters,
        solutions: shared.solutions,
        f_next,
        per_worker,
        per_root: shared.root_loads,
        generated,
        repetitions: 0,
        rebalances,
    })
}

/// Runs one of the thread-parallel schemes on the machine.
pub fn run_thread_parallel(
    instance: &Instance,
    scheme: Scheme,
    mode: Mode,
    cfg: &ThreadParallelConfig,
    trace: Option<&mut Trace<'_>>,
) -> Result<ParallelOutcome> {
    run_thread_parallel_in(&instance.domain(), instance, scheme, mode, cfg, trace)
}

/// As [`run_thread_parallel`], searching in `domain` (which may differ from
/// the instance's own, e.g. a fault-injected heuristic).
pub fn run_thread_parallel_in(
    domain: &Domain,
    instance: &Instance,
    scheme: Scheme,
    mode: Mode,
    cfg: &ThreadParallelConfig,
    trace: Option<&mut Trace<'_>>,
) -> Result<ParallelOutcome> {
    cfg.machine.validate()?;
    let target = cfg.root_target.unwrap_or(cfg.machine.total_lanes());
    let roots = create_root_set_in(domain, instance, target, cfg.root_set);
    drive(domain, roots, scheme, mode, cfg, trace)
}

/// One lane runs the whole search from the start state; the rest of its
/// warp is masked. This is the sequential solver ported as-is to the machine.
pub fn run_single_lane(instance: &Instance, mode: Mode, cfg: &ThreadParallelConfig, trace: Option<&mut Trace<'_>>) -> Result<ParallelOutcome> {
    run_single_lane_in(&instance.domain(), instance, mode, cfg, trace)
}

pub fn run_single_lane_in(
    domain: &Domain,
    instance: &Instance,
    mode: Mode,
    cfg: &ThreadParallelConfig,
    trace: Option<&mut Trace<'_>>,
) -> Result<ParallelOutcome> {
    let machine = MachineConfig {
        lanes_per_block: cfg.machine.warp_size,
        blocks: 1,
        ..cfg.machine.clone()
    };
    let cfg = ThreadParallelConfig {
        machine,
        ..cfg.clone()
    };
    let roots = RootSet::single(SearchNode::root(domain, instance.start), cfg.root_set);
    drive(domain, roots, Scheme::Simple, mode, &cfg, trace)
}

fn drive(
    domain: &Domain,
    roots: RootSet,
    scheme: Scheme,
    mode: Mode,
    cfg: &ThreadParallelConfig,
    mut trace: Option<&mut Trace<'_>>,
) -> Result<ParallelOutcome> {
    let workers = cfg.machine.total_lanes();
    let rebalance = scheme != Scheme::Simple;
    iterate(domain, roots, mode, cfg.max_limit, rebalance, |roots, limit| {
        let assignment = assign_roots(roots, workers);
        launch(domain, roots, &assignment, limit, mode, cfg, scheme == Scheme::Full, trace.as_deref_mut())
    })
}

/// The iterative-deepening loop shared by every machine scheme: launch at
/// the current limit, fold in the host's share of the count and `f_next`,
/// and optionally rebalance the roots before the next launch.
pub(crate) fn iterate(
    domain: &Domain,
    mut roots: RootSet,
    mode: Mode,
    max_limit: u32,
    rebalance: bool,
    mut launch: impl FnMut(&RootSet, u32) -> Result<Launch>,
) -> Result<ParallelOutcome> {
    let mut limit = roots.first_limit().ok_or(Error::EmptyRun)?;
    let mut reports: Vec<IterationReport> = Vec::new();
    let mut iterations = Vec::new();
    let mut total = StepCounters::default();
    let (mut expanded, mut generated) = (0, 0);
    loop {
        if limit > max_limit {
            return Err(Error::IterationLimit { limit, max: max_limit });
        }
        let run = launch(&roots, limit)?;
        let mut f_next = run.f_next;
        if let Some(f) = roots.host_f_next(limit) {
            fold_min(&mut f_next, f);
        }
        let report = IterationReport {
            limit,
            f_next,
            lane_expansions: run.per_worker.iter().sum(),
            host_expansions: roots.interior_expanded(limit),
            generated: run.generated,
            per_worker: run.per_worker,
            per_root: run.per_root,
            root_count: roots.len(),
            repetitions: run.repetitions,
            counters: run.counters,
            rebalances: run.rebalances,
        };
        total.merge(&report.counters);
        expanded += report.expanded();
        generated += report.generated;
        iterations.push(IterationStats {
            limit,
            expanded: report.expanded(),
            generated: report.generated,
            f_next,
        });
        let per_root = report.per_root.clone();
        reports.push(report);

        let kind = if !run.solutions.is_empty() {
            let mut paths = run.solutions;
            paths.sort();
            paths.dedup();
            if mode == Mode::FirstSolution {
                paths.truncate(1);
            }
            Some(OutcomeKind::Found {
                cost: paths[0].len() as u32,
                paths,
            })
        } else if f_next.is_none() {
            Some(OutcomeKind::Exhausted { f_next: None })
        } else {
            None
        };
        if let Some(kind) = kind {
            let mut metrics = compute_metrics(&total)?;
            let outcome = ParallelOutcome {
                outcome: SearchOutcome {
                    kind,
                    nodes_expanded: expanded,
                    nodes_generated: generated,
                    iterations,
                },
                iterations: reports,
                counters: total,
                metrics,
                roots_final: roots.len(),
            };
            metrics.load_balance = outcome.reported_load_balance();
            return Ok(ParallelOutcome { metrics, ..outcome });
        }
        limit = f_next.expect("checked above");
        if rebalance {
            update_root_set(domain, &mut roots, &per_root);
        }
    }
}
