//! Solver results checked against independent oracles: breadth-first search
//! over the whole 8-puzzle space, full heuristic recomputation, layered tree
//! counting, and A* with a closed list on the 15-puzzle.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use bpida::harness::random_suite;
use bpida::oracle::{tree_count, BfsOracle};
use bpida::puzzle::{apply, korf100, manhattan, manhattan_delta, parse_instance};
use bpida::rootset::create_root_set;
use bpida::search::{dfs_from, ida_star_with, SearchConfig};
use bpida::{ida_star, Domain, Instance, Mode, Operator, PuzzleState, RootSetConfig, SearchNode};

fn oracle() -> BfsOracle {
    BfsOracle::build(3)
}

#[test]
fn ida_star_matches_bfs_on_every_eight_puzzle() {
    let oracle = oracle();
    let states = oracle.states();
    assert_eq!(states.len(), 181_440);
    let domain = Domain::new(3).unwrap();
    let config = SearchConfig::default();
    for s in states {
        let got = ida_star_with(&domain, s, Mode::FirstSolution, &config).unwrap();
        assert_eq!(got.cost(), oracle.cost(&s), "board {s}");
    }
}

#[test]
fn manhattan_never_exceeds_true_cost() {
    let oracle = oracle();
    for inst in random_suite(3, 100, 3) {
        assert!(manhattan(&inst.start, &inst.goal) <= oracle.cost(&inst.start).unwrap());
    }
}

#[test]
fn delta_matches_recomputation_everywhere() {
    let goal = PuzzleState::goal(3);
    let mut pairs = 0;
    for s in oracle().states() {
        for op in Operator::ALL {
            if let Some(t) = apply(&s, op) {
                let want = manhattan(&t, &goal) as i32 - manhattan(&s, &goal) as i32;
                assert_eq!(manhattan_delta(&s, op, &goal), want, "{s} {op:?}");
                pairs += 1;
            }
        }
    }
    // Each undirected move is seen once from each side.
    assert_eq!(pairs % 2, 0);
}

#[test]
fn f_next_matches_tree_enumeration() {
    let oracle = oracle();
    for inst in random_suite(3, 50, 5) {
        let cost = oracle.cost(&inst.start).unwrap();
        if cost < 2 {
            continue;
        }
        let limit = cost - 2;
        let domain = inst.domain();
        let root = SearchNode::root(&domain, inst.start);
        let r = dfs_from(&domain, &root, &[], limit, Mode::AllSolutions, &SearchConfig::default()).unwrap();
        let tree = tree_count(&inst.start, limit, true);
        assert!(r.solutions.is_empty());
        assert_eq!(r.f_next, tree.f_next, "{}", inst.to_line());
        assert_eq!(r.expanded, tree.nodes, "{}", inst.to_line());
    }
}

#[test]
fn all_solutions_count_every_optimal_path() {
    let oracle = oracle();
    for inst in random_suite(3, 40, 9) {
        let got = ida_star(&inst, Mode::AllSolutions).unwrap();
        assert_eq!(got.paths().len() as u64, oracle.optimal_path_count(&inst.start).unwrap());
    }
}

#[test]
fn unsolvable_board_is_rejected() {
    assert!(parse_instance("1 2 3 4 5 6 8 7 0").is_err());
}

#[test]
fn root_set_keeps_an_optimal_route() {
    let oracle = oracle();
    for inst in random_suite(3, 20, 13) {
        let set = create_root_set(&inst, 32, RootSetConfig::default());
        let best = set
            .entries()
            .iter()
            .map(|e| e.node.g as u32 + oracle.cost(&e.node.state).unwrap())
            .min()
            .unwrap();
        assert_eq!(best, oracle.cost(&inst.start).unwrap(), "{}", inst.to_line());
    }
}

/// A* with a closed list: shares nothing with the depth-first code.
fn astar_cost(inst: &Instance) -> u32 {
    let h = |s: &PuzzleState| manhattan(s, &inst.goal);
    let mut best: HashMap<PuzzleState, u32> = HashMap::from([(inst.start, 0)]);
    let mut open = BinaryHeap::from([Reverse((h(&inst.start), 0u32, inst.start))]);
    while let Some(Reverse((_, g, s))) = open.pop() {
        if s == inst.goal {
            return g;
        }
        if best.get(&s).is_some_and(|&b| b < g) {
            continue;
        }
        for op in Operator::ALL {
            if let Some(t) = apply(&s, op) {
                let gt = g + 1;
                if best.get(&t).is_none_or(|&b| gt < b) {
                    best.insert(t, gt);
                    open.push(Reverse((gt + h(&t), gt, t)));
                }
            }
        }
    }
    unreachable!("solvable board")
}

#[test]
fn easiest_korf_costs_match_astar() {
    for inst in korf100().into_iter().take(10) {
        let got = ida_star(&inst, Mode::FirstSolution).unwrap();
        assert_eq!(got.cost(), Some(astar_cost(&inst)), "instance {}", inst.id);
    }
}
