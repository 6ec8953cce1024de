use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index ({row}, {col}) out of range for {height}x{width} grid")]
    Index {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("spectrum is not conjugate-symmetric (imaginary residue {residue:e})")]
    SymmetryViolation { residue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("token sequence was produced with codebook {expected:016x}, got {actual:016x}")]
    StaleCodebook { expected: u64, actual: u64 },

    #[error("token {index} at position {position} is out of range for codebook of size {k}")]
    CorruptToken {
        position: usize,
        index: usize,
        k: usize,
    },

    #[error("class {class} out of range (model has {classes} classes)")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
