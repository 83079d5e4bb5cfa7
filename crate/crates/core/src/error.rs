use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine reports. Each variant maps to a distinct
/// process exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes {0:?}, expected \"TRJ1\"")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("probability row of example {example}, epoch {epoch} sums to {sum}")]
    ProbabilitySum { example: usize, epoch: usize, sum: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("example {0} has no label")]
    MissingLabel(usize),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::BadMagic(_) | Error::Version(_) | Error::Truncated(_) | Error::Format(_) => 4,
            Error::Csv(_) => 4,
            Error::ProbabilitySum { .. } | Error::Invariant(_) => 5,
            Error::Dimension(_) | Error::MissingLabel(_) => 6,
            Error::Domain(_) => 7,
            Error::Degenerate(_) => 8,
            Error::Config(_) => 9,
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
