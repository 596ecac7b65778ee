//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ManeError>;

#[derive(Debug, Error)]
pub enum ManeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// File does not match the expected binary/text format.
    #[error("format error: {0}")]
    Format(String),

    /// Pieces of one input disagree with each other (e.g. label count vs row count).
    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A split or schedule asks for more than the data can provide.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input is valid but has no usable structure (e.g. all points identical).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Curve fit failed to reach the required residual.
    #[error("curve fit did not converge: mean squared residual {residual:.3e}")]
    Fit { residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    /// Non-finite coordinate produced during optimization.
    #[error("optimization diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("unsupported dimension: expected {expected}, got {got}")]
    UnsupportedDim { expected: usize, got: usize },

    /// A module error tagged with the pipeline phase it occurred in.
    #[error("phase {phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<ManeError>,
    },
}

impl ManeError {
    /// Wrap the error with the pipeline phase it occurred in.
    pub fn in_phase(self, phase: &'static str) -> Self {
        ManeError::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping phase tags.
    pub fn root(&self) -> &ManeError {
        match self {
            ManeError::Phase { source, .. } => source.root(),
            other => other,
        }
    }
}
