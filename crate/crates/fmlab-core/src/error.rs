use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("impurity set does not cover the domain plus margin {margin}: {detail}")]
    MarginViolation { margin: f64, detail: String },

    #[error("infeasible impurity geometry: {0}")]
    Infeasible(String),

    #[error("singular matrix at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("linear solve did not reach tolerance {tol:e}: residual {residual:e}")]
    SolveTolerance { residual: f64, tol: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("realization {index} failed: {source}")]
    Realization {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("energy {energy} is not strictly below the spectral edge {edge}")]
    EnergyInSpectrum { energy: f64, edge: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("contraction violated: kernel norm {norm} >= 1")]
    NotContraction { norm: f64 },

    #[error("truncation radius {radius} too small: tail bound {tail:e} exceeds {allowed:e}")]
    TruncationTooSmall { radius: usize, tail: f64, allowed: f64 },

    #[error("quadrature did not converge: estimated error {error:e}")]
    Quadrature { error: f64 },

    #[error("degenerate ground state: gap {gap:e}")]
    DegenerateGroundState { gap: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Whether the error reports a broken mathematical invariant rather than
    /// bad input or a numerical failure.
    pub fn is_invariant(&self) -> bool {
        match self {
            Error::Invariant(_) => true,
            Error::Realization { source, .. } => source.is_invariant(),
            _ => false,
        }
    }

    /// Whether the error stems from invalid input.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::EmptyDomain(_)
            | Error::LengthMismatch { .. }
            | Error::Infeasible(_)
            | Error::MarginViolation { .. }
            | Error::DegenerateGeometry(_)
            | Error::EnergyInSpectrum { .. }
            | Error::Precondition(_) => true,
            Error::Realization { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_realization(self, index: u64) -> Error {
        match self {
            e @ Error::Realization { .. } => e,
            e => Error::Realization {
                index,
                source: Box::new(e),
            },
        }
    }
}
