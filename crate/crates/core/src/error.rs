use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward called without a matching forward on the tape")]
    NoForward,
    #[error("unknown network config `{0}`")]
    UnknownConfig(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("unknown dataset tier `{0}`")]
    UnknownTier(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("degenerate reference scores: expert and random both equal {0}")]
    DegenerateReference(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated file while reading {0}")]
    Truncated(&'static str),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("malformed checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape { op, lhs, rhs }
    }

    /// True for errors caused by malformed or unreadable files.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::VersionMismatch { .. }
                | Error::Truncated(_)
                | Error::DimMismatch(_)
                | Error::Manifest(_)
        )
    }
}
