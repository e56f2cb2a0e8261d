//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A cycle configuration violated its invariants (tau < 2, capacity
    /// overflow, capacity < n_scenes, ...).
    #[error("invalid cycle configuration: {0}")]
    InvalidConfig(String),

    /// n_scenes^(1/k) < 2: no cycle plan with k patterns covers the database.
    #[error("infeasible pattern count k={k} for {n_scenes} scenes (k-th root below 2)")]
    InfeasibleK { n_scenes: usize, k: usize },

    /// A phase label exceeded its cycle length.
    #[error("label {label} out of range for pattern {pattern} (tau = {tau})")]
    LabelOutOfRange { pattern: usize, label: u32, tau: u32 },

    /// Reconstruction landed on a padded virtual scene (index > n_scenes).
    #[error("reconstructed index {index} exceeds database size {n_scenes}")]
    IndexBeyondDatabase { index: usize, n_scenes: usize },

    /// A class in 1..=n_classes has no training rows.
    #[error("class {class} of {n_classes} has no training rows")]
    EmptyClass { class: u32, n_classes: u32 },

    /// Vector/matrix width does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Training data carries no normalization metadata.
    #[error("feature matrix is not normalized (no per-column statistics)")]
    NotNormalized,

    /// Planted blocks overlap or run past the feature dimension.
    #[error("planted blocks overlap or exceed dimension {d}")]
    BlockOverflow { d: usize },

    /// A chunk is too small for its cycle plan.
    #[error("chunk {chunk} ({n_scenes} scenes) cannot satisfy the cycle plan: {source}")]
    ChunkTooSmall {
        chunk: usize,
        n_scenes: usize,
        #[source]
        source: Box<Error>,
    },

    /// An error raised while training one chunk of a chunked model.
    #[error("chunk {chunk}: {source}")]
    Chunk {
        chunk: usize,
        #[source]
        source: Box<Error>,
    },

    /// Baseline cycle lengths must be pairwise co-prime.
    #[error("cycle lengths {taus:?} are not pairwise co-prime")]
    NotCoprime { taus: Vec<u32> },

    /// File does not start with the expected magic bytes.
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    /// File ended before the declared content.
    #[error("truncated file: needed {needed} more bytes")]
    TruncatedFile { needed: usize },

    /// A NaN or infinite value at ingestion.
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    /// A CSV row with the wrong number of fields.
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },

    /// Unsupported format version.
    #[error("unsupported format version {found}")]
    VersionMismatch { found: u16 },

    /// Payload length or content checks failed on load.
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    /// Malformed numeric field in a text input.
    #[error("unparsable number at row {row}, column {col}")]
    BadNumber { row: usize, col: usize },

    #[error("too few points for a fit: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by malformed or unreadable files (as opposed
    /// to invalid parameters or data values).
    pub fn is_io_like(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::BadMagic { .. }
                | Error::TruncatedFile { .. }
                | Error::VersionMismatch { .. }
                | Error::CorruptPayload(_)
        )
    }
}
