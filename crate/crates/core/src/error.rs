use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::State;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The Schur iteration hit its iteration cap. Carries the offending matrix.
    #[error("eigensolver did not converge within {max_iter} iterations on a {}x{} matrix", .matrix.nrows(), .matrix.ncols())]
    EigenNonConvergence {
        matrix: DMatrix<f64>,
        max_iter: usize,
    },

    #[error("dominant eigenvalue is not simple: gap to next real part is {gap:e}")]
    PerronDegenerate { gap: f64 },

    #[error("single-virus fixed point did not converge after {iterations} iterations")]
    SingleVirusNonConvergence { iterations: usize, last: Vec<f64> },

    #[error("degenerate equilibrium: hyperbolic margin {margin:e} is below threshold")]
    DegenerateEquilibrium {
        state: Box<State>,
        eigenvalues: Vec<Complex64>,
        margin: f64,
    },

    #[error("state does not fit the healthy/boundary/coexistence taxonomy")]
    OffTaxonomy { state: Box<State> },

    #[error("trajectory left the region of interest by {violation:e} at t = {t}")]
    RegionViolation { t: f64, violation: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
