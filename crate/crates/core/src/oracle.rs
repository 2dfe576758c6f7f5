//! Independent reference answers for the 8-puzzle.
//!
//! Nothing here uses the solvers or the table-driven [`Domain`]: distances
//! come from breadth-first search over the full state space and node counts
//! from layered walk counting with the plain [`manhattan`] function.
//!
//! [`Domain`]: crate::puzzle::Domain

use std::collections::{HashMap, VecDeque};

use crate::puzzle::{apply, manhattan, Operator, PuzzleState};

/// Exact distance-to-goal for every state reachable from the goal.
pub struct BfsOracle {
    goal: PuzzleState,
    dist: HashMap<PuzzleState, u8>,
}

impl BfsOracle {
    /// Full-space BFS from the canonical goal. Practical for side 3 only.
    pub fn build(side: u8) -> BfsOracle {
        let goal = PuzzleState::goal(side);
        let mut dist = HashMap::with_capacity(if side == 3 { 181_440 } else { 1024 });
        let mut queue = VecDeque::new();
        dist.insert(goal, 0u8);
        queue.push_back(goal);
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            for op in Operator::ALL {
                if let Some(t) = apply(&s, op) {
                    dist.entry(t).or_insert_with(|| {
                        queue.push_back(t);
                        d + 1
                    });
                }
            }
        }
        BfsOracle { goal, dist }
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn goal(&self) -> &PuzzleState {
        &self.goal
    }

    /// Optimal cost, or `None` when the goal is unreachable.
    pub fn cost(&self, s: &PuzzleState) -> Option<u32> {
        self.dist.get(s).map(|&d| d as u32)
    }

    /// All reachable states in a deterministic order.
    pub fn states(&self) -> Vec<PuzzleState> {
        let mut v: Vec<PuzzleState> = self.dist.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Number of distinct shortest paths from `start` to the goal.
    pub fn optimal_path_count(&self, start: &PuzzleState) -> Option<u64> {
        let d0 = self.cost(start)?;
        // Layer-by-layer count of shortest-path prefixes ending in each state.
        let mut layer: HashMap<PuzzleState, u64> = HashMap::from([(*start, 1)]);
        for d in (1..=d0).rev() {
            let mut next: HashMap<PuzzleState, u64> = HashMap::new();
            for (s, &ways) in &layer {
                for op in Operator::ALL {
                    if let Some(t) = apply(s, op) {
                        if self.cost(&t) == Some(d - 1) {
                            *next.entry(t).or_insert(0) += ways;
                        }
                    }
                }
            }
            layer = next;
        }
        Some(layer.get(&self.goal).copied().unwrap_or(0))
    }
}

/// What a complete f-limited tree search from `start` must see.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeCount {
    /// Nodes with `f <= limit`, goals included but not extended.
    pub nodes: u64,
    /// Smallest `f` among children cut off by the limit.
    pub f_next: Option<u32>,
    /// Goal nodes with `f <= limit` (distinct paths).
    pub goals: u64,
}

/// Counts the nodes of the f-limited search tree by walking layer by layer,
/// merging tree nodes that share `(state, arriving operator)`.
pub fn tree_count(start: &PuzzleState, limit: u32, parent_pruning: bool) -> TreeCount {
    let goal = PuzzleState::goal(start.side());
    let h = |s: &PuzzleState| manhattan(s, &goal);
    let mut out = TreeCount {
        nodes: 0,
        f_next: None,
        goals: 0,
    };
    if h(start) > limit {
        out.f_next = Some(h(start));
        return out;
    }
    let mut layer: HashMap<(PuzzleState, Option<Operator>), u64> = HashMap::from([((*start, None), 1)]);
    let mut g = 0u32;
    while !layer.is_empty() {
        let mut next: HashMap<(PuzzleState, Option<Operator>), u64> = HashMap::new();
        for (&(s, last), &ways) in &layer {
            out.nodes += ways;
            if s == goal {
                out.goals += ways;
                continue;
            }
            for op in Operator::ALL {
                if parent_pruning && last == Some(op.inverse()) {
                    continue;
                }
                let Some(t) = apply(&s, op) else { continue };
                let f = g + 1 + h(&t);
                if f <= limit {
                    *next.entry((t, Some(op))).or_insert(0) += ways;
                } else {
                    out.f_next = Some(out.f_next.map_or(f, |m| m.min(f)));
                }
            }
        }
        layer = next;
        g += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_puzzle_space_size() {
        let oracle = BfsOracle::build(3);
        assert_eq!(oracle.len(), 181_440);
        let max = oracle.states().iter().map(|s| oracle.cost(s).unwrap()).max();
        assert_eq!(max, Some(31));
    }

    #[test]
    fn path_count_small() {
        let oracle = BfsOracle::build(3);
        let one = PuzzleState::from_tiles(&[1, 0, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert_eq!(oracle.optimal_path_count(&one), Some(1));
        // no 4-cycles in the state graph, so a two-move state has one path
        let two = PuzzleState::from_tiles(&[1, 4, 2, 3, 0, 5, 6, 7, 8]).unwrap();
        assert_eq!(oracle.cost(&two), Some(2));
        assert_eq!(oracle.optimal_path_count(&two), Some(1));
    }

    #[test]
    fn tree_count_at_goal() {
        let goal = PuzzleState::goal(3);
        let t = tree_count(&goal, 0, true);
        assert_eq!(t, TreeCount { nodes: 1, f_next: None, goals: 1 });
    }
}
