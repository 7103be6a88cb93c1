use thiserror::Error;

/// Errors raised across the estimation pipeline.
///
/// Variant names are stable: the CLI prints them verbatim on stderr.
#[derive(Debug, Error)]
pub enum QnsError {
    #[error("PoleOnGrid: ARMA denominator magnitude {magnitude:e} at omega = {freq}")]
    PoleOnGrid { freq: f64, magnitude: f64 },

    #[error("NotStationary: AR polynomial has a root on or outside the unit circle")]
    NotStationary,

    #[error("InvalidCounts: {0}")]
    InvalidCounts(String),

    #[error("NegativePower: spectrum value {value} at omega = {freq}")]
    NegativePower { freq: f64, value: f64 },

    #[error("MalformedFile: {0}")]
    MalformedFile(String),

    #[error("NoConvergence: {0}")]
    NoConvergence(String),

    #[error("TooFewPoints: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("SingularSystem: {0}")]
    SingularSystem(String),

    #[error("NegativeResidualVariance: b0^2 = {0:e}")]
    NegativeResidualVariance(f64),

    #[error("DegenerateSpectrum: {floored} of {total} grid points below the log floor")]
    DegenerateSpectrum { floored: usize, total: usize },

    #[error("AllClipped: every survival probability is at or below the 1/2 boundary")]
    AllClipped,

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl QnsError {
    /// Short variant name, used for structured CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            QnsError::PoleOnGrid { .. } => "PoleOnGrid",
            QnsError::NotStationary => "NotStationary",
            QnsError::InvalidCounts(_) => "InvalidCounts",
            QnsError::NegativePower { .. } => "NegativePower",
            QnsError::MalformedFile(_) => "MalformedFile",
            QnsError::NoConvergence(_) => "NoConvergence",
            QnsError::TooFewPoints { .. } => "TooFewPoints",
            QnsError::SingularSystem(_) => "SingularSystem",
            QnsError::NegativeResidualVariance(_) => "NegativeResidualVariance",
            QnsError::DegenerateSpectrum { .. } => "DegenerateSpectrum",
            QnsError::AllClipped => "AllClipped",
            QnsError::InvalidArgument(_) => "InvalidArgument",
            QnsError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, QnsError>;
