use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice parameters: {0}")]
    InvalidLattice(&'static str),
    #[error("fields live on different lattices")]
    LatticeMismatch,
    #[error("film height left the admissible set: min(1 + v) = {min_height:e}")]
    DomainViolation { min_height: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("projection onto the complement of the kernel is numerically singular")]
    SingularProjection,
    #[error("no symmetric critical direction at the bifurcation candidate")]
    InadmissibleKernel,
    #[error("nonlinear stability run was inconclusive (deviation ratio {ratio:.3e})")]
    Inconclusive { ratio: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
