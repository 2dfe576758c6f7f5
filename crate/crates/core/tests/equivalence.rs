//! Parallel schemes must expand exactly the nodes the sequential solver
//! expands at every limit, and find the same optimal paths.

use bpida::bpida::{run_bpida, BlockParallelConfig};
use bpida::puzzle::{random_solvable, Instance};
use bpida::search::{dfs_from, ida_star, Mode, SearchConfig, SearchNode};
use bpida::thread_parallel::{run_single_lane, run_thread_parallel, ParallelOutcome, Scheme, ThreadParallelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn suite(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| random_solvable(3, i as u32 + 1, &mut rng)).collect()
}

fn seq_count_at(inst: &Instance, limit: u32) -> (u64, Option<u32>) {
    let dom = inst.domain();
    let root = SearchNode::root(&dom, inst.start);
    let r = dfs_from(&dom, &root, &[], limit, Mode::AllSolutions, &SearchConfig::default()).unwrap();
    (r.expanded, r.f_next)
}

fn check_against_seq(inst: &Instance, par: &ParallelOutcome, label: &str) {
    let seq = ida_star(inst, Mode::AllSolutions).unwrap();
    let cost = seq.cost().unwrap();
    assert_eq!(par.outcome.cost(), Some(cost), "{label} cost on {}", inst.to_line());
    for it in &par.iterations {
        if it.limit < cost {
            let (n, f) = seq_count_at(inst, it.limit);
            assert_eq!(it.expanded(), n, "{label} limit {} on {}", it.limit, inst.to_line());
            assert_eq!(it.f_next, f, "{label} f_next at {}", it.limit);
        }
    }
}

#[test]
fn thread_parallel_all_solutions_match_sequential() {
    let cfg = ThreadParallelConfig::default();
    for inst in suite(20, 7) {
        let seq = ida_star(&inst, Mode::AllSolutions).unwrap();
        for scheme in [Scheme::Simple, Scheme::Static, Scheme::Full] {
            let par = run_thread_parallel(&inst, scheme, Mode::AllSolutions, &cfg, None).unwrap();
            let last = par.iterations.last().unwrap();
            assert_eq!(last.expanded(), seq.iterations.last().unwrap().expanded, "{scheme:?}");
            assert_eq!(par.outcome.paths(), seq.paths(), "{scheme:?}");
            check_against_seq(&inst, &par, &format!("{scheme:?}"));
        }
        let g1 = run_single_lane(&inst, Mode::AllSolutions, &cfg, None).unwrap();
        assert_eq!(g1.outcome.nodes_expanded, seq.nodes_expanded);
        assert_eq!(g1.outcome.paths(), seq.paths());
    }
}

#[test]
fn block_parallel_all_solutions_match_sequential() {
    let cfg = BlockParallelConfig::default();
    for inst in suite(20, 11) {
        let seq = ida_star(&inst, Mode::AllSolutions).unwrap();
        let par = run_bpida(&inst, Mode::AllSolutions, &cfg, None).unwrap();
        assert_eq!(par.iterations.last().unwrap().expanded(), seq.iterations.last().unwrap().expanded);
        assert_eq!(par.outcome.paths(), seq.paths());
        check_against_seq(&inst, &par, "bpida");
    }
}

#[test]
fn host_threads_match_machine() {
    use bpida::concurrent::{run_bpida_threads, ExecutorConfig};
    let cfg = BlockParallelConfig::default();
    for inst in suite(10, 13) {
        let sim = run_bpida(&inst, Mode::AllSolutions, &cfg, None).unwrap();
        let real = run_bpida_threads(&inst, Mode::AllSolutions, &cfg, &ExecutorConfig::default()).unwrap();
        assert_eq!(real.outcome.cost(), sim.outcome.cost());
        assert_eq!(real.outcome.paths(), sim.outcome.paths());
        assert_eq!(real.iterations.last().unwrap().expanded(), sim.iterations.last().unwrap().expanded());
        let first = run_bpida_threads(&inst, Mode::FirstSolution, &cfg, &ExecutorConfig::default()).unwrap();
        assert_eq!(first.outcome.cost(), sim.outcome.cost());
    }
}
