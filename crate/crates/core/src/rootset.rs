//! Root sets: the frontier that splits one IDA* tree among workers.
//!
//! Construction and rebalancing run best-first (A*) on the host. Nodes
//! expanded there become *interior* nodes; their `f` values are kept so that
//! per-limit node counts can be compared with a single-root search.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::puzzle::{Domain, Instance, Operator};
use crate::search::{fold_min, Path, SearchNode};

#[derive(Clone, Debug)]
pub struct RootEntry {
    pub node: SearchNode,
    /// Operators from the start state to this root.
    pub path: Path,
    /// Estimated work, taken from the previous iteration.
    pub load: f64,
    /// Generation sequence number.
    pub origin: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootSetConfig {
    /// Drop generated nodes whose state was already seen with an equal or
    /// smaller `g`. Off by default: pruning removes duplicate subtrees, and
    /// then per-limit node counts no longer match a tree search.
    pub closed_pruning: bool,
}

#[derive(Clone, Debug)]
pub struct RootSet {
    entries: Vec<RootEntry>,
    /// Best `g` seen per state key, across construction and every split.
    seen: HashMap<u64, u16>,
    /// Interior (host-expanded) node count per `f`.
    interior: BTreeMap<u32, u64>,
    next_origin: u64,
    config: RootSetConfig,
    /// The reachable frontier was smaller than requested.
    pub exhausted: bool,
    pub duplicates_pruned: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Priority {
    f: u32,
    h: u16,
    origin: u64,
}

/// Best-first frontier with lazy deletion. Goals are held but never offered
/// for expansion.
struct Frontier {
    open: BTreeMap<u64, RootEntry>,
    heap: BinaryHeap<Reverse<Priority>>,
    by_state: HashMap<u64, u64>,
}

impl Frontier {
    fn new() -> Frontier {
        Frontier {
            open: BTreeMap::new(),
            heap: BinaryHeap::new(),
            by_state: HashMap::new(),
        }
    }

    fn insert(&mut self, domain: &Domain, e: RootEntry) {
        if !domain.is_goal(&e.node.state) {
            self.heap.push(Reverse(Priority {
                f: e.node.f(),
                h: e.node.h,
                origin: e.origin,
            }));
        }
        self.by_state.insert(e.node.state.key(), e.origin);
        self.open.insert(e.origin, e);
    }

    fn remove_state(&mut self, key: u64) -> Option<RootEntry> {
        let origin = self.by_state.remove(&key)?;
        self.open.remove(&origin)
    }

    fn pop_best(&mut self) -> Option<RootEntry> {
        while let Some(Reverse(p)) = self.heap.pop() {
            if let Some(e) = self.open.remove(&p.origin) {
                self.by_state.remove(&e.node.state.key());
                return Some(e);
            }
        }
        None
    }

    fn len(&self) -> usize {
        self.open.len()
    }
}

impl RootSet {
    /// A set holding only `node`, with no host expansion.
    pub fn single(node: SearchNode, config: RootSetConfig) -> RootSet {
        let mut seen = HashMap::new();
        seen.insert(node.state.key(), node.g);
        RootSet {
            entries: vec![RootEntry {
                node,
                path: Vec::new(),
                load: 1.0,
                origin: 0,
            }],
            seen,
            interior: BTreeMap::new(),
            next_origin: 1,
            config,
            exhausted: false,
            duplicates_pruned: 0,
        }
    }

    pub fn entries(&self) -> &[RootEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn config(&self) -> RootSetConfig {
        self.config
    }

    /// Interior nodes the host expanded that a tree search at `limit` would
    /// also expand.
    pub fn interior_expanded(&self, limit: u32) -> u64 {
        self.interior.range(..=limit).map(|(_, n)| n).sum()
    }

    pub fn interior_total(&self) -> u64 {
        self.interior.values().sum()
    }

    /// Smallest interior `f` above `limit`.
    pub fn interior_f_next(&self, limit: u32) -> Option<u32> {
        self.interior.range(limit + 1..).next().map(|(&f, _)| f)
    }

    pub fn min_root_f(&self) -> Option<u32> {
        self.entries.iter().map(|e| e.node.f()).min()
    }

    /// Smallest `f` over every root and interior node. With a consistent
    /// heuristic this is the start's `f`, the sequential first limit.
    pub fn first_limit(&self) -> Option<u32> {
        let interior = self.interior.keys().next().copied();
        match (self.min_root_f(), interior) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// `f_next` contributions that live on the host side of the split:
    /// roots above the limit and interior nodes above the limit.
    pub fn host_f_next(&self, limit: u32) -> Option<u32> {
        let mut f_next = self.interior_f_next(limit);
        for e in &self.entries {
            if e.node.f() > limit {
                fold_min(&mut f_next, e.node.f());
            }
        }
        f_next
    }

    fn fresh_origin(&mut self) -> u64 {
        let o = self.next_origin;
        self.next_origin += 1;
        o
    }

    /// Records a generated node; returns false if it is dominated and must be
    /// dropped.
    fn admit(&mut self, node: &SearchNode) -> bool {
        if !self.config.closed_pruning {
            return true;
        }
        match self.seen.get(&node.state.key()) {
            Some(&g) if g <= node.g => {
                self.duplicates_pruned += 1;
                false
            }
            _ => {
                self.seen.insert(node.state.key(), node.g);
                true
            }
        }
    }

    /// Best-first expansion of `frontier` until it holds at least `target`
    /// entries or nothing expandable remains. Returns false in the latter case.
    fn grow(&mut self, domain: &Domain, frontier: &mut Frontier, target: usize, load_each: f64) -> bool {
        while frontier.len() < target {
            let Some(parent) = frontier.pop_best() else {
                return false;
            };
            *self.interior.entry(parent.node.f()).or_insert(0) += 1;
            for op in Operator::ALL {
                let Some(child) = parent.node.child(domain, op) else {
                    continue;
                };
                if !self.admit(&child) {
                    continue;
                }
                if self.config.closed_pruning {
                    // A better copy supersedes a worse one still waiting in OPEN.
                    frontier.remove_state(child.state.key());
                }
                let mut path = parent.path.clone();
                path.push(op);
                let origin = self.fresh_origin();
                frontier.insert(
                    domain,
                    RootEntry {
                        node: child,
                        path,
                        load: load_each,
                        origin,
                    },
                );
            }
        }
        true
    }

    /// Sets loads from the last iteration and splits every root whose load
    /// exceeds the mean. See [`update_root_set`].
    pub fn rebalance(&mut self, domain: &Domain, loads: &[u64]) -> UpdateSummary {
        assert_eq!(loads.len(), self.entries.len(), "one load per root");
        for (e, &l) in self.entries.iter_mut().zip(loads) {
            e.load = l.max(1) as f64;
        }
        let average = self.entries.iter().map(|e| e.load).sum::<f64>() / self.entries.len() as f64;
        let mut summary = UpdateSummary {
            average,
            ..UpdateSummary::default()
        };

        let old = std::mem::take(&mut self.entries);
        let mut kept = Vec::with_capacity(old.len());
        let mut added = Vec::new();
        for e in old {
            if e.load <= average || domain.is_goal(&e.node.state) {
                kept.push(e);
                continue;
            }
            let target = (e.load / average).ceil() as usize;
            let load = e.load;
            let interior_before = self.interior_total();
            let mut frontier = Frontier::new();
            frontier.insert(domain, e);
            self.grow(domain, &mut frontier, target.max(2), 0.0);
            let mut droots: Vec<RootEntry> = frontier.open.into_values().collect();
            let each = load / droots.len().max(1) as f64;
            for d in &mut droots {
                d.load = each;
            }
            summary.splits += 1;
            summary.interior_added += self.interior_total() - interior_before;
            added.extend(droots);
        }
        // A split child may have superseded a kept root with a worse g.
        if self.config.closed_pruning {
            let best: HashMap<u64, u16> = added.iter().map(|d| (d.node.state.key(), d.node.g)).collect();
            kept.retain(|e| best.get(&e.node.state.key()).is_none_or(|&g| g > e.node.g));
        }
        kept.extend(added);
        kept.sort_by_key(|e| e.origin);
        self.entries = kept;
        summary
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub average: f64,
    pub splits: usize,
    pub interior_added: u64,
}

/// A* from the start until the frontier holds `target_count` states.
///
/// Goals are kept in the frontier unexpanded. If the reachable frontier is
/// smaller than requested the whole frontier is returned with `exhausted` set.
pub fn create_root_set(instance: &Instance, target_count: usize, config: RootSetConfig) -> RootSet {
    create_root_set_in(&instance.domain(), instance, target_count, config)
}

pub fn create_root_set_in(domain: &Domain, instance: &Instance, target_count: usize, config: RootSetConfig) -> RootSet {
    assert!(target_count >= 1, "target_count must be positive");
    let start = SearchNode::root(domain, instance.start);
    let mut set = RootSet::single(start, config);
    let mut frontier = Frontier::new();
    frontier.insert(domain, set.entries.pop().expect("single root"));
    let complete = set.grow(domain, &mut frontier, target_count, 1.0);
    set.exhausted = !complete;
    set.entries = frontier.open.into_values().collect();
    set
}

/// Static rebalancing between iterations.
///
/// `loads[i]` is the work measured under root `i` in the last iteration
/// (floored at 1). Every root above the mean is replaced by the frontier of
/// an A* expansion from it holding at least `ceil(load / mean)` nodes, each
/// carrying `load / |frontier|`. The mean is fixed for the whole pass.
pub fn update_root_set(domain: &Domain, roots: &mut RootSet, loads: &[u64]) -> UpdateSummary {
    roots.rebalance(domain, loads)
}

/// Greedy assignment in generation order.
///
/// Worker `t` takes roots until its summed load reaches the per-worker share
/// `total / worker_count`; the last worker absorbs whatever remains, and
/// trailing workers may end up empty.
pub fn assign_roots(roots: &RootSet, worker_count: usize) -> Vec<Vec<usize>> {
    let loads: Vec<f64> = roots.entries.iter().map(|e| e.load).collect();
    assign_loads(&loads, worker_count)
}

pub fn assign_loads(loads: &[f64], worker_count: usize) -> Vec<Vec<usize>> {
    assert!(worker_count >= 1, "worker_count must be positive");
    let share = loads.iter().sum::<f64>() / worker_count as f64;
    let mut out = vec![Vec::new(); worker_count];
    let mut t = 0;
    let mut sum = 0.0;
    for (i, &l) in loads.iter().enumerate() {
        out[t].push(i);
        sum += l;
        if sum >= share && t + 1 < worker_count {
            t += 1;
            sum = 0.0;
        }
    }
    out
}
