//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IfefError>;

#[derive(Debug, Error)]
pub enum IfefError {
    /// Invalid dimensions, inconsistent configuration, bad hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite value produced during evaluation. `index` points at the
    /// offending collocation point (or epoch) when known.
    #[error("numeric error{}: {msg}", match index { Some(i) => format!(" at index {i}"), None => String::new() })]
    Numeric { index: Option<usize>, msg: String },

    /// SPD factorization failed even after the regularization fallback.
    #[error("singular system: smallest pivot {pivot:.3e}")]
    Singular { pivot: f64 },

    /// Iterative lower solve blew up; the loss trace is kept for diagnostics.
    #[error("lower solve diverged: loss {last:.3e} exceeds 10x initial {initial:.3e} after {} steps", trace.len())]
    Divergence { initial: f64, last: f64, trace: Vec<f64> },

    /// relative_l2 against an identically-zero reference.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IfefError {
    pub fn config(msg: impl Into<String>) -> Self {
        IfefError::Config(msg.into())
    }

    pub fn numeric(index: Option<usize>, msg: impl Into<String>) -> Self {
        IfefError::Numeric { index, msg: msg.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        IfefError::Io { path: path.into(), source }
    }
}
