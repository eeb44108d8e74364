use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative or non-finite rate {rate} on entry ({x}, {y})")]
    NegativeRate { x: usize, y: usize, rate: f64 },
    #[error(
        "chain restricted to 1..{size} is not irreducible (type {unreachable} cannot reach or be reached from type 1)"
    )]
    ReducibleChain { size: usize, unreachable: usize },
    #[error("chain has no types (K = 0)")]
    EmptyChain,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tolerance {tol:e} not reachable within {cap} iterations")]
    ToleranceUnachievable { tol: f64, cap: usize },
    #[error("linear system is numerically singular (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },
    #[error("iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Lyapunov function must be positive, got V({x}) = {value}")]
    NonpositiveV { x: usize, value: f64 },
    #[error("rates matrix is not a birth-death chain: entry ({x}, {y})")]
    NotBirthDeath { x: usize, y: usize },
    #[error("mean-rate identity violated at ({x}, {y}): definition {definition}, rank-one form {rank_one}")]
    IdentityViolation {
        x: usize,
        y: usize,
        definition: f64,
        rank_one: f64,
    },
    #[error("population is extinct")]
    ExtinctPopulation,
    #[error("population cap {cap} exceeded")]
    PopulationCap { cap: u64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
