use thiserror::Error;

/// Errors produced by the refinement pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate contour")]
    DegenerateContour,

    #[error("singular tangent")]
    SingularTangent,

    #[error("oversampled strip: width {width} exceeds 8x curve length {length:.3}")]
    OversampledStrip { width: usize, length: f64 },

    #[error("empty ground truth")]
    EmptyGroundTruth,

    #[error("score map shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("zero overlap between original and cropped prediction")]
    ZeroOverlap,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
