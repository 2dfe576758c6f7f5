//! Sequential IDA*.
//!
//! This is the reference every parallel scheme is checked against: the same
//! f-limited depth-first search with an explicit bounded stack, goal test on
//! pop, and parent-action pruning taken from the [`Domain`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{Domain, Instance, Operator, PuzzleState};

pub const DEFAULT_STACK_CAPACITY: usize = 128;

pub type Path = Vec<Operator>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Stop at the first goal popped.
    FirstSolution,
    /// Finish the final iteration and collect every optimal path.
    AllSolutions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SearchNode {
    pub state: PuzzleState,
    pub g: u16,
    pub h: u16,
    pub last_op: Option<Operator>,
}

impl SearchNode {
    pub fn root(domain: &Domain, state: PuzzleState) -> SearchNode {
        SearchNode {
            state,
            g: 0,
            h: domain.h(&state),
            last_op: None,
        }
    }

    #[inline]
    pub fn f(&self) -> u32 {
        self.g as u32 + self.h as u32
    }

    /// Successor under `op`, or `None` if inapplicable or pruned.
    #[inline]
    pub fn child(&self, domain: &Domain, op: Operator) -> Option<SearchNode> {
        if !domain.allowed(op, self.last_op) {
            return None;
        }
        let (state, delta) = domain.step(&self.state, op)?;
        Some(SearchNode {
            state,
            g: self.g + 1,
            h: (self.h as i16 + delta) as u16,
            last_op: Some(op),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Found { cost: u32, paths: Vec<Path> },
    /// `f_next` is `None` when no node was cut off by the limit.
    Exhausted { f_next: Option<u32> },
}

/// Work done at one f-limit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStats {
    pub limit: u32,
    pub expanded: u64,
    pub generated: u64,
    pub f_next: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub kind: OutcomeKind,
    pub nodes_expanded: u64,
    pub nodes_generated: u64,
    pub iterations: Vec<IterationStats>,
}

impl SearchOutcome {
    pub fn cost(&self) -> Option<u32> {
        match &self.kind {
            OutcomeKind::Found { cost, .. } => Some(*cost),
            OutcomeKind::Exhausted { .. } => None,
        }
    }

    pub fn paths(&self) -> &[Path] {
        match &self.kind {
            OutcomeKind::Found { paths, .. } => paths,
            OutcomeKind::Exhausted { .. } => &[],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub stack_capacity: usize,
    pub max_limit: u32,
    /// Child generation order. Children are pushed in reverse so the first
    /// operator here is explored first.
    pub op_order: [Operator; 4],
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            stack_capacity: DEFAULT_STACK_CAPACITY,
            max_limit: u16::MAX as u32 / 2,
            op_order: Operator::ALL,
        }
    }
}

/// Raw result of one bounded DFS, before it is folded into an outcome.
#[derive(Clone, Debug, Default)]
pub struct DfsResult {
    pub solutions: Vec<Path>,
    pub f_next: Option<u32>,
    pub expanded: u64,
    pub generated: u64,
}

#[inline]
pub(crate) fn fold_min(acc: &mut Option<u32>, v: u32) {
    *acc = Some(acc.map_or(v, |a| a.min(v)));
}

/// Depth-first search below `root` expanding exactly the nodes with
/// `f <= limit`. `prefix` is the path from the start state to `root` and is
/// prepended to reported solutions.
pub fn dfs_from(
    domain: &Domain,
    root: &SearchNode,
    prefix: &[Operator],
    limit: u32,
    mode: Mode,
    config: &SearchConfig,
) -> Result<DfsResult> {
    let mut out = DfsResult::default();
    if root.f() > limit {
        out.f_next = Some(root.f());
        return Ok(out);
    }
    let base = root.g as usize;
    let mut stack: Vec<SearchNode> = Vec::with_capacity(config.stack_capacity);
    let mut path: Path = prefix.to_vec();
    stack.push(*root);

    while let Some(node) = stack.pop() {
        let depth = node.g as usize;
        if depth > base {
            path.truncate(prefix.len() + depth - base - 1);
            path.push(node.last_op.expect("non-root node has an arriving operator"));
        } else {
            path.truncate(prefix.len());
        }
        out.expanded += 1;

        if domain.is_goal(&node.state) {
            out.solutions.push(path.clone());
            if mode == Mode::FirstSolution {
                return Ok(out);
            }
            continue;
        }

        for &op in config.op_order.iter().rev() {
            let Some(child) = node.child(domain, op) else {
                continue;
            };
            out.generated += 1;
            let f = child.f();
            if f <= limit {
                if stack.len() == config.stack_capacity {
                    return Err(Error::StackOverflow {
                        capacity: config.stack_capacity,
                    });
                }
                stack.push(child);
            } else {
                fold_min(&mut out.f_next, f);
            }
        }
    }
    Ok(out)
}

/// One f-limited iteration from `root`.
pub fn f_limited_dfs(
    domain: &Domain,
    root: &SearchNode,
    limit: u32,
    mode: Mode,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    let r = dfs_from(domain, root, &[], limit, mode, config)?;
    let stats = IterationStats {
        limit,
        expanded: r.expanded,
        generated: r.generated,
        f_next: r.f_next,
    };
    let kind = if r.solutions.is_empty() {
        OutcomeKind::Exhausted { f_next: r.f_next }
    } else {
        OutcomeKind::Found {
            cost: r.solutions[0].len() as u32 + root.g as u32,
            paths: r.solutions,
        }
    };
    Ok(SearchOutcome {
        kind,
        nodes_expanded: r.expanded,
        nodes_generated: r.generated,
        iterations: vec![stats],
    })
}

/// Iterative deepening from `manhattan(start)` until a goal is popped.
pub fn ida_star(instance: &Instance, mode: Mode) -> Result<SearchOutcome> {
    ida_star_with(&instance.domain(), instance.start, mode, &SearchConfig::default())
}

pub fn ida_star_with(
    domain: &Domain,
    start: PuzzleState,
    mode: Mode,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    if !start.is_solvable() {
        return Err(Error::Unsolvable { id: 0 });
    }
    let root = SearchNode::root(domain, start);
    let mut limit = root.f();
    let mut iterations = Vec::new();
    let (mut expanded, mut generated) = (0, 0);
    loop {
        if limit > config.max_limit {
            return Err(Error::IterationLimit {
                limit,
                max: config.max_limit,
            });
        }
        let r = dfs_from(domain, &root, &[], limit, mode, config)?;
        expanded += r.expanded;
        generated += r.generated;
        iterations.push(IterationStats {
            limit,
            expanded: r.expanded,
            generated: r.generated,
            f_next: r.f_next,
        });
        if !r.solutions.is_empty() {
            let mut paths = r.solutions;
            paths.sort();
            return Ok(SearchOutcome {
                kind: OutcomeKind::Found {
                    cost: paths[0].len() as u32,
                    paths,
                },
                nodes_expanded: expanded,
                nodes_generated: generated,
                iterations,
            });
        }
        match r.f_next {
            Some(next) => limit = next,
            None => {
                return Ok(SearchOutcome {
                    kind: OutcomeKind::Exhausted { f_next: None },
                    nodes_expanded: expanded,
                    nodes_generated: generated,
                    iterations,
                })
            }
        }
    }
}

/// Replays `path` from `start` and checks it ends at the goal.
pub fn path_reaches_goal(domain: &Domain, start: PuzzleState, path: &[Operator]) -> bool {
    let mut s = start;
    for &op in path {
        match domain.step(&s, op) {
            Some((next, _)) => s = next,
            None => return false,
        }
    }
    domain.is_goal(&s)
}
