use crate::linalg::DEGENERATE_EPS;

/// Crate-wide error type. Variants are kept fine-grained so callers (and the
/// CLI) can distinguish bad input data from programmer errors and report the
/// offending file/line/row precisely.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A weight row whose norm is below the degenerate threshold has no
    /// direction, hence no angle to anything; every consumer must surface
    /// this rather than divide by (almost) zero.
    #[error("degenerate row {row}: norm {norm:.3e} is below {DEGENERATE_EPS:.0e}")]
    DegenerateRow { row: usize, norm: f64 },

    /// A row that was required to be unit-length is not (beyond tolerance).
    #[error("row {row} is not unit-norm: |{norm} - 1| exceeds 1e-6")]
    NotNormalized { row: usize, norm: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated: expected {expected} bytes, found {found}")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
