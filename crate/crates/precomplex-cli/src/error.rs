use std::path::Path;

use precomplex::discrete_geometry::GeometryError;
use precomplex::precomplex_engine::EngineError;
use precomplex::symbol_check::SymbolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Process exit status: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Geometry(GeometryError::Io { .. }) | CliError::Engine(EngineError::Io { .. }) | CliError::Io { .. } => 3,
            CliError::Geometry(_) | CliError::Symbol(_) => 2,
            CliError::Engine(_) => 3,
        }
    }
}
