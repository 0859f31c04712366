use std::path::PathBuf;

/// Errors produced by the risk-terrain engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A document violated the expected schema. `path` names the offending
    /// field (for example `buildings[2].height_m`).
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    /// Invalid geometry (self-intersecting polygon, degenerate ring, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A grid or polygon falls outside the extent it must lie within, or two
    /// grids that must align do not.
    #[error("extent error: {0}")]
    Extent(String),

    /// Inconsistent or incomplete scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument violated a mathematical precondition (h0 <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model expression could not be evaluated (reported, never masked).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A binary artifact is malformed or its content hash does not match.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// Two ground-use polygons of different classes cover the same cell with
    /// equal priority.
    #[error("ambiguous ground use: {0}")]
    AmbiguousGroundUse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A statistical validation check failed (oracle mismatch).
    #[error("validation failed: {0}")]
    Validation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
