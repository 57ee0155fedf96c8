use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid robot geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid cross-section: tilt {tilt_deg}° must lie in [0°, 90°) and diameter must be positive")]
    InvalidSection { tilt_deg: f64 },

    #[error("reach {reach_mm} mm is below the pipe semi-minor axis {semi_minor_mm} mm")]
    InsufficientReach { reach_mm: f64, semi_minor_mm: f64 },

    #[error("no free orientation gap: every roll angle is inside the singularity region")]
    NoEscape,

    #[error("segment {index}: {message}")]
    Parse { index: usize, message: String },

    #[error("network document: {0}")]
    Document(String),

    #[error("segment {index}: invalid field `{field}`: {message}")]
    Validation {
        index: usize,
        field: &'static str,
        message: String,
    },

    #[error("arc length {s} mm outside segment {index} of length {length} mm")]
    OutOfRange { index: usize, s: f64, length: f64 },

    #[error("segment is not an elbow")]
    NotAnElbow,

    #[error("segment is not a tee")]
    NotATee,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
