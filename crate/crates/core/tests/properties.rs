//! Scheduling, splitting and stack properties that hold for any input.

use bpida::bpida::{run_bpida, BlockParallelConfig};
use bpida::concurrent::{brute_force_linearizable, check_history, stress_history};
use bpida::harness::random_suite;
use bpida::puzzle::{korf100, KORF100};
use bpida::rootset::{assign_loads, create_root_set, update_root_set, RootSet};
use bpida::search::{dfs_from, SearchConfig};
use bpida::simt::MachineConfig;
use bpida::thread_parallel::{
    check_balance_trigger, run_thread_parallel, BalanceState, Scheme, ThreadParallelConfig,
};
use bpida::{ida_star, Domain, Instance, Mode, PuzzleState, RootSetConfig};
use proptest::prelude::*;

#[test]
fn trigger_threshold_example() {
    let s = BalanceState { l: 10, t: 30, w: 640 };
    assert_eq!(s.threshold(), 16.0);
    assert!(check_balance_trigger(&s, 15, 32));
    assert!(!check_balance_trigger(&s, 16, 32));
}

#[test]
fn trigger_holds_during_cooldown_and_without_work() {
    let cooling = BalanceState { l: 10, t: 4, w: 10_000 };
    assert!(!check_balance_trigger(&cooling, 0, 32));
    let idle = BalanceState { l: 10, t: 30, w: 0 };
    assert!(!check_balance_trigger(&idle, 0, 32));
}

proptest! {
    #[test]
    fn trigger_is_monotone_in_running_lanes(l in 0u64..200, t in 0u64..400, w in 0u64..10_000, r in 1usize..=64) {
        let s = BalanceState { l, t, w };
        if check_balance_trigger(&s, r, 64) {
            prop_assert!(check_balance_trigger(&s, r - 1, 64));
        }
    }

    #[test]
    fn assignment_covers_each_root_once_in_order(
        loads in prop::collection::vec(0.0f64..100.0, 1..60),
        workers in 1usize..12,
    ) {
        let parts = assign_loads(&loads, workers);
        prop_assert_eq!(parts.len(), workers);
        let flat: Vec<usize> = parts.into_iter().flatten().collect();
        prop_assert_eq!(flat, (0..loads.len()).collect::<Vec<_>>());
    }

    #[test]
    fn small_histories_agree_with_exhaustive_search(seed in any::<u64>()) {
        let h = stress_history(3, 3, 4, 2, seed);
        prop_assert!(check_history(&h, 4).is_ok());
        prop_assert!(brute_force_linearizable(&h, 4));
    }
}

/// Nodes expanded at `limit` across the roots plus the host's share.
fn count_under(domain: &Domain, roots: &RootSet, limit: u32) -> u64 {
    let cfg = SearchConfig::default();
    let lanes: u64 = roots
        .entries()
        .iter()
        .map(|e| dfs_from(domain, &e.node, &e.path, limit, Mode::AllSolutions, &cfg).unwrap().expanded)
        .sum();
    lanes + roots.interior_expanded(limit)
}

#[test]
fn splitting_conserves_tree_work() {
    for inst in random_suite(3, 10, 21) {
        let domain = inst.domain();
        let mut roots = create_root_set(&inst, 16, RootSetConfig::default());
        let cost = ida_star(&inst, Mode::FirstSolution).unwrap().cost().unwrap();
        let loads: Vec<u64> = (0..roots.len() as u64).map(|i| 1 + (i * 37) % 11 * 20).collect();
        let before: Vec<u64> = (0..=cost).map(|l| count_under(&domain, &roots, l)).collect();
        let summary = update_root_set(&domain, &mut roots, &loads);
        assert!(summary.splits > 0, "{}", inst.to_line());
        let after: Vec<u64> = (0..=cost).map(|l| count_under(&domain, &roots, l)).collect();
        assert_eq!(before, after, "{}", inst.to_line());
    }
}

#[test]
fn one_lane_machine_matches_sequential() {
    let cfg = ThreadParallelConfig {
        machine: MachineConfig {
            warp_size: 1,
            lanes_per_block: 1,
            sm_count: 1,
            warp_slots_per_sm: 1,
            blocks: 1,
        },
        root_target: Some(1),
        ..ThreadParallelConfig::default()
    };
    for inst in random_suite(3, 10, 4) {
        let seq = ida_star(&inst, Mode::AllSolutions).unwrap();
        let par = run_thread_parallel(&inst, Scheme::Simple, Mode::AllSolutions, &cfg, None).unwrap();
        assert_eq!(par.outcome.iterations, seq.iterations, "{}", inst.to_line());
    }
}

#[test]
fn rebalance_log_respects_cooldown() {
    let cfg = ThreadParallelConfig::default();
    let mut events = 0;
    for inst in korf100().into_iter().take(3) {
        let run = run_thread_parallel(&inst, Scheme::Full, Mode::FirstSolution, &cfg, None).unwrap();
        for it in &run.iterations {
            for e in &it.rebalances {
                events += 1;
                assert!(2 * e.state.t >= e.state.l, "fired inside cooldown: {e:?}");
                assert!((e.running as f64) < e.threshold);
                let mut thieves: Vec<usize> = e.transfers.iter().map(|t| t.thief).collect();
                thieves.sort();
                thieves.dedup();
                assert_eq!(thieves.len(), e.transfers.len(), "a lane stole twice in one event");
                assert!(e.transfers.iter().all(|t| t.thief != t.donor));
            }
            for block in 0..cfg.machine.blocks {
                let log: Vec<_> = it.rebalances.iter().filter(|e| e.block == block).collect();
                for pair in log.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    assert_eq!(b.state.l, a.duration);
                    assert_eq!(b.state.t, b.tick - a.tick - a.duration + 1);
                }
            }
        }
    }
    assert!(events > 0, "no rebalance fired on the sample");
}

#[test]
fn repetitions_bound_popped_nodes() {
    let cfg = BlockParallelConfig::default();
    let per_rep = (cfg.machine.warp_size / 4) as u64;
    for inst in random_suite(3, 10, 8) {
        let run = run_bpida(&inst, Mode::AllSolutions, &cfg, None).unwrap();
        for it in &run.iterations {
            assert!(it.repetitions >= it.lane_expansions.div_ceil(per_rep));
        }
    }
}

#[test]
fn single_block_solves_trivial_board() {
    let cfg = BlockParallelConfig {
        machine: MachineConfig {
            blocks: 1,
            ..MachineConfig::block_parallel()
        },
        ..BlockParallelConfig::default()
    };
    let inst = Instance::new(1, PuzzleState::goal(3)).unwrap();
    let run = run_bpida(&inst, Mode::FirstSolution, &cfg, None).unwrap();
    assert_eq!(run.outcome.cost(), Some(0));
}

#[test]
fn block_parallel_costs_match_bundled_korf_costs() {
    let costs: Vec<u32> = KORF100
        .lines()
        .filter_map(|l| l.split_once("# cost ").map(|(_, rest)| rest))
        .map(|rest| rest.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    let cfg = BlockParallelConfig::default();
    for (inst, cost) in korf100().into_iter().zip(costs).take(30) {
        let run = run_bpida(&inst, Mode::FirstSolution, &cfg, None).unwrap();
        assert_eq!(run.outcome.cost(), Some(cost), "instance {}", inst.id);
    }
}
