use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The input stream failed mid-read. `offset` is the byte offset of the
    /// first byte that could not be consumed.
    #[error("input error at byte {offset}: {source}")]
    Input {
        offset: u64,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch: file says {expected}, content hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("cannot compute a signature of an empty shingle set")]
    EmptyShingleSet,

    #[error("alignment matrix has no rows")]
    EmptyMatrix,

    #[error("every row of the alignment matrix is a misfit")]
    AllRowsMisfit,

    #[error("quality loss is undefined for an empty pattern set")]
    EmptyPatternSet,

    #[error("submissions use mismatched Bloom configurations (clients: {})", .0.join(", "))]
    MixedBloomConfig(Vec<String>),

    #[error("infeasible dataset spec: {0}")]
    InfeasibleSpec(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
