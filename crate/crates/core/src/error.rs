use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("pixel ({row}, {col}) lies outside the {height}x{width} image")]
    PixelOutOfRange {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("pixel ({row}, {col}) is unlabeled")]
    UnlabeledPixel { row: usize, col: usize },

    #[error("class {class} has {available} labeled pixels, needs at least {required}")]
    ClassTooSmall {
        class: u16,
        available: usize,
        required: usize,
    },

    #[error("label {label} outside 1..={num_classes}")]
    LabelOutOfRange { label: u16, num_classes: usize },

    #[error("kappa is undefined when expected agreement is 1")]
    KappaUndefined,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("palette has {available} colors, needs {required}")]
    PaletteTooSmall { available: usize, required: usize },

    #[error("backward pass requires a train-mode forward cache")]
    InferenceCache,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by NaN/Inf arithmetic rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::KappaUndefined)
    }
}
