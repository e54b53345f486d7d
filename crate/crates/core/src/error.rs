use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("tape does not match model: {0}")]
    Tape(String),

    #[error("non-finite gradient entry in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("domain layer is in test mode and has no gradient")]
    TestModeGradient,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference solver does not support this instance: {0}")]
    UnsupportedOracle(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            got,
        })
    }
}
