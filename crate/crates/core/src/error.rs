use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// I/O problems, validation problems (bad input or configuration) and
/// numerical problems (an iteration that did not converge).
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at channel {channel}, sample {sample}")]
    NonFinite { channel: usize, sample: usize },
    #[error("duplicate channel label {0:?}")]
    DuplicateChannel(String),
    #[error("recording too short: {samples} samples, need at least {required}")]
    TooShort { samples: usize, required: usize },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("only {0} full segment(s) fit the recording, need at least 2")]
    TooFewSegments(usize),
    #[error("Hermitian eigendecomposition did not converge")]
    EigenFailure,
    #[error("zero power on channel {channel} at {freq_hz} Hz")]
    ZeroPower { channel: usize, freq_hz: f64 },
    #[error("common component {component} did not converge (residual {residual:e})")]
    NoConvergence { component: usize, residual: f64 },
    #[error("all cross-spectral matrices are zero")]
    DegenerateInput,
    #[error("data rank {rank} is below the {components} requested components")]
    RankDeficient { components: usize, rank: usize },
    #[error("cross-spectra have zero total trace")]
    ZeroTrace,
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("band {0:?} contains no frequency bins")]
    EmptyBand(String),
    #[error("network has no off-diagonal edges")]
    EmptyNetwork,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dipole {index} lies outside the brain shell (radius {radius_mm} mm)")]
    DipoleOutsideBrain { index: usize, radius_mm: f64 },
    #[error("coherence target [{lo}, {hi}] not reached: measured range [{min}, {max}]")]
    TargetUnreachable { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("regularized Gram matrix is singular")]
    SingularGram,
    #[error("ROI {0:?} has no member sources")]
    EmptyRoi(String),
    #[error("ICA did not converge after {iterations} iterations (delta {delta:e})")]
    IcaNoConvergence { iterations: usize, delta: f64 },
    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported units {0:?}")]
    UnsupportedUnits(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Csv(_) => ErrorClass::Io,
            Error::EigenFailure
            | Error::NoConvergence { .. }
            | Error::IcaNoConvergence { .. }
            | Error::TargetUnreachable { .. }
            | Error::SingularGram => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
