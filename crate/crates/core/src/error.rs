use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{name} must be a positive finite bandwidth, got {value}")]
    NonPositiveBandwidth { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error(
        "overlap pattern matches neither the fully-hidden nor the threshold-layer template; \
         the closed forms do not apply, run the simulator instead"
    )]
    IrregularOverlap,

    #[error("per-layer profile required: {0}")]
    MissingLayers(&'static str),

    #[error("layer {layer} has no gradient size")]
    MissingGradientSize { layer: usize },

    #[error("invalid input: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("simulation invariant violated: {0}")]
    SimulationInvariant(String),

    #[error("{source_name}:{line}: column {column}: {message}")]
    Reference {
        source_name: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("no reference record for scenario {0}")]
    UnresolvedScenario(String),

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn check_bandwidth(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveBandwidth { name, value })
    }
}
