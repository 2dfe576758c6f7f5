use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance: {0}")]
    MalformedInstance(String),

    #[error("instance {id} is unsolvable (permutation parity does not match the goal)")]
    Unsolvable { id: u32 },

    #[error("search stack overflow: capacity {capacity} entries exceeded")]
    StackOverflow { capacity: usize },

    #[error("f-limit {limit} exceeds the configured maximum {max}")]
    IterationLimit { limit: u32, max: u32 },

    #[error("machine deadlock at tick {tick}: resident warps cannot step but work remains")]
    DeadlockDetected { tick: u64 },

    #[error("no lane expanded any node")]
    EmptyRun,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle mismatch on instance {instance}: {detail}")]
    OracleMismatch { instance: String, detail: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
