use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid graph: {0}")]
    Validation(String),

    #[error("clique enumeration exceeded the cap of {cap} simplices")]
    TooManySimplices { cap: usize },

    #[error("degenerate coupling: gamma[{degree}] is zero")]
    DegenerateCoupling { degree: usize },

    #[error("block structure violated: block ({row_degree},{col_degree}) has entry {magnitude:e}")]
    Structure {
        row_degree: usize,
        col_degree: usize,
        magnitude: f64,
    },

    #[error("ambiguous numerical rank: {0}")]
    Ambiguous(String),

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error("diagnostic failed: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
