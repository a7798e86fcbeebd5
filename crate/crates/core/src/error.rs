use std::path::PathBuf;

/// Errors produced anywhere in the library.
///
/// Variants are grouped roughly by the stage that raises them. The CLI maps
/// [`Error::is_adapter_failure`] to its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame indices are not strictly increasing at position {position}")]
    NonMonotonicIndices { position: usize },
    #[error("target index {0} is not present in the window")]
    MissingTarget(usize),

    #[error("file missing: {}", .0.display())]
    FileMissing(PathBuf),
    #[error("malformed header in {}: {reason}", .path.display())]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported max value {maxval} in {}", .path.display())]
    UnsupportedMaxVal { path: PathBuf, maxval: u32 },
    #[error("i/o failure on {}: {source}", .path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dimensions {width}x{height} are below the 8x8 minimum")]
    DimensionTooSmall { width: usize, height: usize },

    #[error("invalid pyramid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask covers the whole frame; no boundary values exist")]
    MaskCoversFrame,
    #[error("mask is empty")]
    EmptyMask,

    #[error("degenerate normalization bounds: min {min} >= max {max}")]
    DegenerateBounds { min: f64, max: f64 },
    #[error("combination weights sum to zero")]
    ZeroWeights,
    #[error("not enough history: {0}")]
    InsufficientHistory(String),

    #[error("evaluation region is empty")]
    EmptyRegion,
    #[error("sweep has {0} entries; at least 2 are required")]
    InsufficientEntries(usize),
    #[error("maximum PSNR {0} is not positive")]
    NonPositiveMax(f64),
    #[error("line fit needs at least two distinct x values")]
    DegenerateX,

    #[error("video '{video}' is too short: {reason}")]
    VideoTooShort { video: String, reason: String },
    #[error("inpainter failure: {0}")]
    InpainterFailure(String),
    #[error("degenerate calibration samples: {0}")]
    DegenerateSamples(String),
    #[error("profile schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("memory budget {budget_mb} MB cannot hold one frame ({base_mb} MB base + {per_frame_mb} MB/frame)")]
    BudgetTooSmall {
        budget_mb: u32,
        base_mb: u32,
        per_frame_mb: u32,
    },
    #[error("history of {available} frames is shorter than the {required} frames required")]
    HistoryTooShort { available: usize, required: usize },

    #[error("external inpainter process failed: {0}")]
    ProcessFailure(String),
    #[error("external inpainter timed out after {0:?}")]
    Timeout(std::time::Duration),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the inpainting backend itself rather than of the data.
    pub fn is_adapter_failure(&self) -> bool {
        matches!(
            self,
            Error::ProcessFailure(_) | Error::Timeout(_) | Error::InpainterFailure(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
