//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A tail bound could not be certified within the configured maximum
    /// truncation length.
    #[error("series tail not certified below relative tolerance {rel_tol} within L = {max_len}")]
    TailNotCertified { rel_tol: f64, max_len: usize },

    /// Requested total mass exceeds the saturation mass; no equilibrium exists.
    #[error("supersaturated: requested mass {rho} exceeds saturation mass {rho_s}")]
    Supersaturated { rho: f64, rho_s: f64 },

    /// Root bracketing/bisection failed to reach the requested tolerance.
    #[error("bisection did not reach tolerance {tol} within {iters} iterations")]
    BisectionFailed { tol: f64, iters: usize },

    /// The truncation length for an asymptotic-constant evaluation is too
    /// small for the requested remainder tolerance.
    #[error("insufficient limit L = {l_limit}: remainder bound {bound} exceeds tolerance {tol}")]
    InsufficientLimit {
        l_limit: usize,
        bound: f64,
        tol: f64,
    },

    /// A masked (zero-density) gradient entry was consumed against a nonzero
    /// Onsager weight.
    #[error("masked covector entry read against nonzero edge weight at edge {edge}")]
    MaskedCovector { edge: usize },

    /// Adaptive step size fell below the configured minimum.
    #[error("step size underflow at t = {t}: dt = {dt} < dt_min = {dt_min}")]
    DtUnderflow { t: f64, dt: f64, dt_min: f64 },

    /// Particle ensemble has no live atoms.
    #[error("empty particle ensemble")]
    EmptyEnsemble,

    /// Detailed balance violated beyond tolerance when building a network.
    #[error("detailed balance violated for reaction {reaction}: relative residual {residual}")]
    DetailedBalance { reaction: usize, residual: f64 },

    /// Malformed network description file.
    #[error("network file parse error at line {line}: {msg}")]
    NetworkParse { line: usize, msg: String },

    /// Unknown initial-condition family name.
    #[error("unknown initial-condition family: {0}")]
    UnknownFamily(String),

    /// Invalid experiment configuration.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
