//! Simulator and verification suite for comparison-based public quantum coins.
//!
//! A public coin is a block of `kappa` identical private coins. New coins are
//! verified by projecting the joint wallet+coin state onto the symmetric
//! subspace; the bank verifies privately with a rank-1 projective measurement
//! per register. The crate provides exact (rational) and dense (f64) linear
//! algebra for these measurements, the coin scheme itself, the known attack
//! strategies, Monte-Carlo security-game harnesses, and closed-form spectral
//! analysis cross-checked against dense oracles.

pub mod adversaries;
pub mod analysis;
pub mod games;
pub mod pkqc;
pub mod privcoin;
pub mod report;
pub mod symspace;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("type vector {counts:?} sums to {actual}, expected {expected}")]
    TypeSumMismatch {
        counts: Vec<u32>,
        actual: u32,
        expected: u32,
    },
    #[error("letter {letter} out of range for local dimension {dim}")]
    LetterOutOfRange { letter: usize, dim: usize },
    #[error("local dimension {0} must be at least 2")]
    LocalDimTooSmall(usize),
    #[error("dense dimension {dim} exceeds limit {limit}")]
    DenseLimitExceeded { dim: usize, limit: usize },
    #[error("register {reg} out of range for {registers} registers")]
    RegisterOutOfRange { reg: usize, registers: usize },
    #[error("subset size {subset} exceeds register count {registers}")]
    SubsetTooLarge { subset: usize, registers: usize },
    #[error("register count {got} is not the expected {expected}")]
    RegisterMismatch { got: usize, expected: usize },
    #[error("local dimensions differ: {0} vs {1}")]
    LocalDimMismatch(usize, usize),
    #[error("attack requires m > n, got n = {n}, m = {m}")]
    AttackParams { n: usize, m: usize },
    #[error("{0} is undefined for this transcript: {1}")]
    UndefinedUtility(&'static str, &'static str),
    #[error("chunk sizes {chunks:?} sum to {got}, expected {expected}")]
    ChunkSumMismatch {
        chunks: Vec<usize>,
        got: usize,
        expected: usize,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
