use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("position {x},{y} puts the {w}x{h} window outside the {ow}x{oh} object")]
    OutOfBounds { x: usize, y: usize, w: usize, h: usize, ow: usize, oh: usize },

    #[error("infeasible scan geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("probe radius {radius} exceeds half the {w}x{h} window")]
    RadiusTooLarge { radius: f64, w: usize, h: usize },

    #[error("intensity stack is all zero, cannot scale to a photon budget")]
    ZeroStack,

    #[error("negative mean {0} passed to a noise sampler")]
    NegativeMean(f64),

    #[error("empty illumination mask: {0}")]
    EmptyMask(String),

    #[error("estimate is zero on the mask, alignment undefined")]
    ZeroEstimate,

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("unknown scheme {0}")]
    UnknownScheme(String),

    #[error("unknown transform or functional id {0:?}")]
    UnknownId(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable tag, used by the CLI and the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Domain(_) => "domain",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::InfeasibleGeometry(_) => "infeasible_geometry",
            Error::RadiusTooLarge { .. } => "radius_too_large",
            Error::ZeroStack => "zero_stack",
            Error::NegativeMean(_) => "negative_mean",
            Error::EmptyMask(_) => "empty_mask",
            Error::ZeroEstimate => "zero_estimate",
            Error::NonFinite(_) => "non_finite",
            Error::UnknownScheme(_) => "unknown_scheme",
            Error::UnknownId(_) => "unknown_id",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
