use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error on line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported polynomial degree {0} (supported: 1..=4)")]
    UnsupportedDegree(usize),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is numerically singular at dof {dof} (pivot {pivot:e})")]
    Singular { dof: usize, pivot: f64 },

    #[error("symmetric factorization requested for a matrix without the symmetry flag")]
    NotSymmetric,

    #[error("damping failure in Newton step {step}: delta fell below {floor:e}")]
    DampingFailure { step: usize, floor: f64 },

    #[error("Newton iteration did not terminate within {0} steps")]
    NonTermination(usize),

    #[error("rate fit needs at least 4 positive points in the window, got {0}")]
    InsufficientPoints(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
