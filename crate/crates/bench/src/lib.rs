//! Fixed inputs shared by the benchmarks, so every run measures the same work.

use bpida::harness::{load_korf, random_suite};
use bpida::Instance;

pub const SUITE_SEED: u64 = 42;

/// Eight random solvable 8-puzzles.
pub fn eight_puzzles() -> Vec<Instance> {
    random_suite(3, 8, SUITE_SEED)
}

/// The easiest Korf instance.
pub fn easy_korf() -> Instance {
    load_korf(Some(1)).expect("bundled set loads").remove(0)
}
