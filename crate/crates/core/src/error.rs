use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("lattice capacity exceeded: {0}")]
    Capacity(String),

    #[error("quadrature for {what} did not converge (estimate {estimate:e}, error {error:e}): {detail}")]
    Quadrature {
        what: String,
        estimate: f64,
        error: f64,
        detail: String,
    },

    #[error("ordering violated: alpha2*q2 = {kappa} exceeds alpha1*q1 = {tilt}")]
    Ordering { kappa: f64, tilt: f64 },

    #[error("threshold violated: {0}")]
    Threshold(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("probe too close to window boundary: {0}")]
    Margin(String),

    #[error("truncation insufficient: {0}")]
    Tail(String),

    #[error("nonpositive value in log domain at row {row}: {value}")]
    LogDomain { row: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}
