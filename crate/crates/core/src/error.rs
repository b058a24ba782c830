use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants fall into two families that the command-line front end maps
/// onto different exit codes: data problems (bad input, parse and validation
/// failures, I/O) and numerical problems (islanded topologies, singular
/// systems).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("topology is islanded into {} components (sizes {:?})", .components.len(), component_sizes(.components))]
    Islanded { components: Vec<Vec<usize>> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("sensor at bus {bus} has no active adjacent line")]
    SensorBlind { bus: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

fn component_sizes(components: &[Vec<usize>]) -> Vec<usize> {
    components.iter().map(Vec::len).collect()
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Islanded { .. } | Error::Numerical(_))
    }

    /// Short machine-readable kind, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Islanded { .. } => "islanded",
            Error::Numerical(_) => "numerical",
            Error::SensorBlind { .. } => "sensor_blind",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
