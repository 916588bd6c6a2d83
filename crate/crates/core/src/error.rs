use thiserror::Error;

/// Errors raised by the geometry, analysis and flow layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error at node {node}: {what}")]
    Numeric { node: usize, what: String },

    #[error("flow breakdown at node {node}, t = {time}: {reason}")]
    Breakdown {
        node: usize,
        time: f64,
        reason: String,
    },

    #[error("numeric blow-up at node {node} after step {step}")]
    BlowUp { node: usize, step: u64 },

    /// Initial data whose Gauss map is not strictly inside the area-decreasing class.
    #[error(
        "initial map refused: area-decreasing condition 1 − |λ₁λ₂| > 0 violated or too close to the boundary \
         (min eta = {min_eta:.6e} at node {node}, max λ1λ2 = {max_product:.6e}, required min eta >= {required:e})"
    )]
    OutOfClass {
        min_eta: f64,
        max_product: f64,
        node: usize,
        required: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
