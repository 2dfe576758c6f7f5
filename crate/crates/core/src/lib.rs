//! Iterative-deepening A* for sliding-tile puzzles, with thread-parallel and
//! block-parallel schemes executed on a deterministic SIMT machine model.
//!
//! The sequential solver in [`search`] is the reference; every parallel
//! scheme must reproduce its costs and, in all-solutions mode, its node
//! counts. [`oracle`] provides answers that do not depend on any solver.

pub mod bpida;
pub mod concurrent;
pub mod harness;
pub mod error;
pub mod oracle;
pub mod puzzle;
pub mod rootset;
pub mod search;
pub mod simt;
pub mod thread_parallel;

pub use error::{Error, Result};
pub use harness::{Algorithm, Report, Row, RunSpec};
pub use puzzle::{Domain, Instance, Operator, PuzzleState};
pub use rootset::{RootEntry, RootSet, RootSetConfig};
pub use search::{ida_star, Mode, SearchConfig, SearchNode, SearchOutcome};
