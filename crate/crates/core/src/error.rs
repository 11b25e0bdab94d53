//! Error type shared by every module in the crate.
//!
//! Errors fall into three families that the CLI maps onto distinct exit
//! codes: configuration / usage problems (exit 1), problems with input data
//! or model files (exit 2), and internal invariant violations (exit 3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlError {
    // --- configuration / usage -------------------------------------------
    /// A shape or size argument is inconsistent with the data it is applied to.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A configuration value is missing, malformed, or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// Too few training samples for the requested fit.
    #[error("fit error: requested {requested} kernels but only rank {achievable} is achievable from {samples} samples")]
    InsufficientSamples {
        requested: usize,
        achievable: usize,
        samples: usize,
    },

    /// Every output channel of a stage was labeled discard.
    #[error("empty output: every channel of stage {stage} fell below the keep threshold")]
    EmptyOutput { stage: usize },

    // --- data ------------------------------------------------------------
    /// An input file could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An IDX file announced the wrong magic number.
    #[error("{path}: magic mismatch (expected {expected}, found {found})")]
    MagicMismatch {
        path: String,
        expected: u32,
        found: u32,
    },

    /// A file ended before its header-declared payload was complete.
    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },

    /// Image and label files disagree on the sample count.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// A tabular file had a malformed cell or ragged row.
    #[error("{path}, row {row}: {message}")]
    Tabular {
        path: String,
        row: usize,
        message: String,
    },

    /// A model archive failed validation on load.
    #[error("archive error: {0}")]
    Archive(String),

    /// A model archive was written by an unsupported format version.
    #[error("archive version {found} not supported (this build reads version {supported})")]
    ArchiveVersion { found: u64, supported: u64 },

    /// A model archive's trailing checksum did not match its contents.
    #[error("archive checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    // --- internal --------------------------------------------------------
    /// An invariant that should hold by construction was violated.
    #[error("internal error: {0}")]
    Internal(String),

    /// Any error above, tagged with the workflow module it came from.
    #[error("[{module}] {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<GlError>,
    },
}

impl GlError {
    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        use GlError::*;
        match self {
            Dimension(_) | Config(_) | InsufficientSamples { .. } | EmptyOutput { .. } => 1,
            Io { .. }
            | MagicMismatch { .. }
            | Truncated { .. }
            | CountMismatch { .. }
            | Tabular { .. }
            | Archive(_)
            | ArchiveVersion { .. }
            | ChecksumMismatch { .. } => 2,
            Internal(_) => 3,
            Module { source, .. } => source.exit_code(),
        }
    }

    /// Tag this error with the workflow module it surfaced in.
    pub fn in_module(self, module: &'static str) -> GlError {
        GlError::Module {
            module,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, GlError>;
