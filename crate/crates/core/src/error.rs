use thiserror::Error;

/// Errors raised by the solvers and their configuration checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SviError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("noise dimension mismatch: coefficients have m = {coeffs}, paths have m = {paths}")]
    NoiseMismatch { coeffs: usize, paths: usize },

    #[error("|mu| reached {value:.3e} (cap {cap:.3e}) at t = {t:.6}")]
    MuOverflow { value: f64, cap: f64, t: f64 },

    #[error("stability guard violated at t = {t:.6}: dt*sup|g|/h = {ratio:.4} > 1 after {retries} retries")]
    Stability { t: f64, ratio: f64, retries: u32 },

    #[error("Newton did not converge at t = {t:.6} after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailure { t: f64, iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("study aborted: {0}")]
    Study(String),
}

impl SviError {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SviError::MuOverflow { .. }
                | SviError::Stability { .. }
                | SviError::NewtonFailure { .. }
                | SviError::LinearSolve(_)
                | SviError::Study(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SviError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(SviError::SizeMismatch { expected, got })
    } else {
        Ok(())
    }
}
