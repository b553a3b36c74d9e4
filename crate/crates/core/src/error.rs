use thiserror::Error;

/// Errors produced by the floorplanning engine.
#[derive(Debug, Error)]
pub enum SgfError {
    /// Malformed benchmark or canonical netlist input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structured input that parses but violates a schema or invariant.
    #[error("invalid data: {0}")]
    Invalid(String),

    /// An action that is not legal in the current canvas state.
    #[error("illegal action: {0}")]
    IllegalAction(String),

    /// Episode generation could not produce a complete placement.
    #[error("runtime failure: {0}")]
    Runtime(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SgfError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        SgfError::Parse { line, msg: msg.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SgfError::Io { path: path.into(), source }
    }
}
