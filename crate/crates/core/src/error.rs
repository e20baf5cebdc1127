use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged: {0}")]
    Divergence(Box<DivergenceSnapshot>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

/// State captured when a minibatch produced a non-finite loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSnapshot {
    pub epoch: usize,
    pub batch: usize,
    pub origin_ids: Vec<usize>,
    pub l_tp: f64,
    pub l_r: f64,
    pub lambda: f64,
}

impl fmt::Display for DivergenceSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.origin_ids.iter().take(8).collect();
        write!(
            f,
            "non-finite loss at epoch {} batch {} (L_tp={}, L_r={}, lambda={}); batch origins start {:?}",
            self.epoch, self.batch, self.l_tp, self.l_r, self.lambda, preview
        )
    }
}
