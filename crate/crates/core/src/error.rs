use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Rotation angle too close to π for a well-conditioned logarithm.
    #[error("rotation angle {angle} rad is within 1e-6 of pi; logarithm is ill-conditioned")]
    AngleNearPi { angle: f64 },

    #[error("non-monotonic time: state at {state_t} s, requested {t} s")]
    NonMonotonicTime { state_t: f64, t: f64 },

    #[error("innovation covariance is singular (condition number {condition:e})")]
    SingularInnovation { condition: f64 },

    #[error("steady-state slip covariance is not positive definite")]
    SingularSteadyCovariance,

    #[error("length mismatch: {decisions} decisions vs {labels} labels")]
    LengthMismatch { decisions: usize, labels: usize },

    #[error("invalid trajectory profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{}:{line}: timestamp {t} is earlier than the previous row", path.display())]
    NonMonotonicTimestamps { path: PathBuf, line: u64, t: f64 },

    #[error("no estimate rows fall inside the evaluation window")]
    EmptyWindow,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AngleNearPi { .. } => "AngleNearPi",
            Error::NonMonotonicTime { .. } => "NonMonotonicTime",
            Error::SingularInnovation { .. } => "SingularInnovation",
            Error::SingularSteadyCovariance => "SingularSteadyCovariance",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::Config(_) => "ConfigError",
            Error::Parse { .. } => "ParseError",
            Error::NonMonotonicTimestamps { .. } => "NonMonotonicTimestamps",
            Error::EmptyWindow => "EmptyWindow",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
