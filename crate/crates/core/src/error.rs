use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable queue: m*mu = {capacity} does not exceed lambda = {lambda}")]
    UnstableQueue { capacity: f64, lambda: f64 },

    #[error("divergent expectation: {0}")]
    Divergence(String),

    #[error("quadrature did not converge: estimate {estimate}, error {error}")]
    NonConvergence { estimate: f64, error: f64 },

    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("lambda = {lambda} is not in the continuous spectrum (must be < -{gamma})")]
    Spectrum { lambda: f64, gamma: f64 },

    #[error("spectral evaluation requires t >= {t_min}, got {t}")]
    SpectralTime { t: f64, t_min: f64 },

    #[error("threshold tolerance undefined: equilibrium expectation is zero")]
    UndefinedTolerance,

    #[error("could not invert the transition CDF at u = {0}")]
    InversionFailure(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of a numerical method rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::InversionFailure(_)
                | Error::SpectralTime { .. }
                | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
