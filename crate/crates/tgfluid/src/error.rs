use thiserror::Error;

/// Errors raised by the library. Each variant names the offending quantity so
/// the CLI can print actionable messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter regime violated: |alpha| = {alpha} must be < sqrt(2*nu*beta) = {limit}")]
    ParameterRegime { alpha: f64, limit: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("blow-up at t = {time}: norm {norm:.3e} exceeds limit {limit:.3e}")]
    BlowUp { time: f64, norm: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time window exhausted: requested {requested}, available [{t_min}, {t_max}]")]
    WindowExhausted {
        requested: f64,
        t_min: f64,
        t_max: f64,
    },

    #[error("window too short: tail fraction {tail_fraction:.3e} exceeds {limit:.1e}")]
    WindowTooShort { tail_fraction: f64, limit: f64 },

    #[error("noise exponent s_exp = {0} must exceed d/4 = 0.5")]
    ExponentTooSmall(f64),

    #[error("empty cloud")]
    EmptyCloud,

    #[error("ODE integration failed: {0}")]
    Ode(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
