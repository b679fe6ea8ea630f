use std::path::PathBuf;

use crate::mesh::ConsistencyReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("element {element} references vertex {vertex} outside [0, {n_vertices})")]
    Structural {
        element: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two elements")]
    NonManifold(usize, usize),
    #[error("element {0} has zero area")]
    Degenerate(usize),
    #[error("invalid element {0}")]
    InvalidElement(usize),
    #[error("invalid vertex {0}")]
    InvalidVertex(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("least-squares patch around vertex {0} is rank deficient")]
    SingularPatch(usize),
    #[error("cannot split element {0}: no edge marked")]
    NoMarkedEdges(usize),
    #[error("degenerate smoothing patch around vertex {0}")]
    DegeneratePatch(usize),
    #[error("mesh inconsistent after {phase}: {report}")]
    Consistency { phase: String, report: ConsistencyReport },
    #[error("step {step}: {source}")]
    Step {
        step: i64,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a broken mesh rather than bad input.
    pub fn is_consistency(&self) -> bool {
        match self {
            Error::Consistency { .. } => true,
            Error::Step { source, .. } => source.is_consistency(),
            _ => false,
        }
    }
}
