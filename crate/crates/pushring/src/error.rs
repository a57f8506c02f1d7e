use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("state space too large: {dim} states exceeds cap {cap}")]
    StateSpaceTooLarge { dim: usize, cap: usize },

    #[error("contour condition violated: {0}")]
    ContourCondition(String),

    #[error("root classification unavailable: {0}")]
    Classification(String),

    #[error("numerical tolerance not met: {0}")]
    Tolerance(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("degenerate deformation parameter: {0}")]
    DegenerateZeta(String),

    #[error("branch cut: {0}")]
    BranchCut(String),

    #[error("series diverges: {0}")]
    SeriesDivergence(String),

    #[error("inconsistent current data: {0}")]
    InconsistentCurrent(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
