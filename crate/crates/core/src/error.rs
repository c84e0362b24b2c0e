use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geodesic did not leave the domain within arclength {cap} (trapped or step-size fault)")]
    NoExit { cap: f64 },

    #[error("fan-beam angle {alpha} is not transversal (|alpha| must stay below pi/2 - 1e-6)")]
    InvalidAlpha { alpha: f64 },

    #[error("path terminal point is {distance:e} away from the boundary circle")]
    NotOnBoundary { distance: f64 },

    #[error("non-simple zero of the Jacobi field at t = {t} (|c'| = {derivative:e})")]
    DegenerateZero { t: f64, derivative: f64 },

    #[error("blob at ({x}, {y}) with width {width} reaches beyond radius 0.95")]
    BlobOutsideDomain { x: f64, y: f64, width: f64 },

    #[error("grid too coarse: {n} nodes per axis (need at least {min})")]
    GridTooCoarse { n: usize, min: usize },

    #[error("data coverage {coverage:.3} is below the 0.5 minimum")]
    CoverageTooSparse { coverage: f64 },

    #[error("Neumann iteration diverged at iteration {iteration} (update norm {update:e})")]
    Diverged { iteration: usize, update: f64 },

    #[error("conjugate locus of the source does not meet the subdomain")]
    NoConjugateOverlap,

    #[error("Q-series stalled with relative term norm {residual:e} after {terms} terms")]
    QNotContractive { residual: f64, terms: usize },

    #[error("subdomain is not simple: conjugate points found on {count} chords")]
    NotSimple { count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors raised by a numerical guard (as opposed to bad input).
    pub fn is_numerical_guard(&self) -> bool {
        matches!(
            self,
            Error::NoExit { .. }
                | Error::Diverged { .. }
                | Error::QNotContractive { .. }
                | Error::DegenerateZero { .. }
                | Error::NotSimple { .. }
                | Error::CoverageTooSparse { .. }
                | Error::NoConjugateOverlap
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
