use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the scene → trace → simulate → analyze chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed scene document: {0}")]
    MalformedScene(String),

    #[error("surface `{id}` is not coplanar (vertex {vertex} is {offset_m:.4} m off-plane)")]
    NonCoplanar { id: String, vertex: usize, offset_m: f64 },

    #[error("surface `{id}` is invalid: {reason}")]
    InvalidSurface { id: String, reason: String },

    #[error("duplicate surface id `{0}`")]
    DuplicateSurface(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid blocker trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("time {t_s} s is outside the trajectory span [{start_s}, {end_s}] s")]
    OutsideTrajectory { t_s: f64, start_s: f64, end_s: f64 },

    #[error("invalid pattern table: {0}")]
    InvalidPattern(String),

    #[error("invalid codebook parameters: {0}")]
    InvalidCodebook(String),

    #[error("angle ({phi_deg:.3}, {theta_deg:.3}) deg is outside the pattern grid")]
    OutsideGrid { phi_deg: f64, theta_deg: f64 },

    #[error("PAC index {0} out of range")]
    PacOutOfRange(usize),

    #[error("zero-length direction vector")]
    ZeroDirection,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("path at {delay_ns:.3} ns falls in bin {bin}, beyond the {n_dly}-bin window")]
    DelayBeyondWindow { delay_ns: f64, bin: i64, n_dly: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("no signal detected above the noise threshold")]
    NoSignal,

    #[error("delay bin {bin} out of range (tensor has {n_dly} bins)")]
    BinOutOfRange { bin: usize, n_dly: usize },

    #[error("insufficient pre-LOS region: k_los = {k_los}, guard M = {guard}")]
    InsufficientNoiseRegion { k_los: usize, guard: usize },

    #[error("vector has zero variance")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unknown case id {0} (valid: 1..=12)")]
    UnknownCase(u32),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
