use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("malformed expression: {0}")]
    MalformedExpr(String),
    #[error("arity mismatch: expression uses {expr} variables, grid has dimension {grid}")]
    ArityMismatch { expr: usize, grid: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("node out of grid: {0}")]
    NodeOutOfGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} exceeds the supported maximum of 3")]
    DimensionTooLarge(usize),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("function is not discretely convex: {0}")]
    NotConvex(String),
    #[error("domain of F is not convex on the grid")]
    NonConvexDomain,
    #[error("inconsistent PWLQ pieces: {0}")]
    PieceInconsistent(String),
    #[error("PWLQ declaration disagrees with sampled function: {0}")]
    SampleMismatch(String),
    #[error("missing V-representation: {0}")]
    MissingVRep(String),
    #[error("degenerate set: no points")]
    DegenerateSet,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("unknown example: {0}")]
    UnknownExample(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
