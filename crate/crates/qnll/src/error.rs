use thiserror::Error;

/// Errors surfaced by configuration, assembly and the linear algebra layer.
///
/// Solver non-convergence is deliberately not an error; it is reported in
/// [`crate::solve::SolveReport::converged`].
#[derive(Debug, Error)]
pub enum Error {
    /// A region-ordering constraint such as `Kbar <= L <= N` was violated.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A field does not match the domain it is used on.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A mesh is inconsistent with the configuration it is paired with.
    #[error("mesh/config mismatch: {0}")]
    MeshMismatch(String),

    /// The banded factorisation hit a non-positive pivot.
    #[error("matrix not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    /// The eigenvalue iteration failed to meet its tolerance.
    #[error("eigenvalue iteration stagnated: {0}")]
    Eigen(String),

    /// Malformed key=value settings file.
    #[error("invalid settings: {0}")]
    Settings(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
