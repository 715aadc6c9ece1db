use thiserror::Error;

/// Errors raised by model construction, bound evaluation and simulation.
#[derive(Debug, Error)]
pub enum RbmError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix {name} is numerically singular (condition estimate {cond:e})")]
    Singular { name: &'static str, cond: f64 },

    #[error("stability violated: b = -R^-1 mu has non-positive entry b[{index}] = {value}")]
    Unstable { index: usize, value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("contraction coefficient not reached within {cap} iterations (last norms: {tail:?})")]
    ContractionNotFound { cap: usize, tail: Vec<f64> },

    #[error("complementarity solve did not converge after {iterations} iterations (residual {residual:e})")]
    LcpConvergence { iterations: usize, residual: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("no product-form stationary law available: {0}")]
    NoProductForm(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit degenerate: {0}")]
    FitDegenerate(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RbmError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(RbmError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
