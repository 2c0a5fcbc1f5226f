use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the scattering pipeline.
///
/// Variants are grouped into three categories (configuration, physics, I/O)
/// which the command-line front end maps onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("packet construction failed: {0}")]
    Construction(String),

    #[error(
        "packet reached the {edge} domain boundary at t = {time:.6} \
         (edge probability {edge_probability:.3e} exceeds {threshold:.0e})"
    )]
    BoundaryContact {
        edge: Edge,
        time: f64,
        edge_probability: f64,
        threshold: f64,
    },

    #[error("{context}: {path}: {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Which end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Edge::Left => "left",
            Edge::Right => "right",
        })
    }
}

/// Broad error category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Physics,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Construction(_) | Error::Parse { .. } => ErrorCategory::Config,
            Error::Domain(_) | Error::BoundaryContact { .. } => ErrorCategory::Physics,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(context: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context,
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
