use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Gram-Schmidt broke down on column {column} after {retries} redraws")]
    GramSchmidtBreakdown { column: usize, retries: usize },

    #[error("{path}: bad magic 0x{found:08x} (expected 0x{expected:08x}) at byte offset 0")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated {
        path: PathBuf,
        offset: u64,
        needed: u64,
    },

    #[error(
        "{images} holds {image_count} images but {labels} holds {label_count} labels \
         (label count field at byte offset 4)"
    )]
    LengthMismatch {
        images: PathBuf,
        image_count: usize,
        labels: PathBuf,
        label_count: usize,
    },

    #[error("{path}: malformed file at byte offset {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("softmax scale alpha became non-positive ({alpha}) at epoch {epoch}")]
    NonPositiveAlpha { epoch: usize, alpha: f64 },

    #[error("backward called before forward")]
    NoForwardCache,

    #[error("dense and FWHT outputs disagree by {max_abs_diff:e}")]
    BenchMismatch { max_abs_diff: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
