use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::manifest::ManifestError;
use crate::snapshot::SnapshotError;
use crate::table::TableError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const ABORTED: i32 = 3;
    pub const INCOMPATIBLE: i32 = 4;
    pub const ORACLE_CAP: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("evolution failed: {0}")]
    Evolution(String),
    #[error("{leg} stopped at {stamp}: bond {bond} needed discarded weight {discarded:e} above tolerance")]
    Aborted { leg: String, stamp: f64, bond: usize, discarded: f64 },
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("{0}")]
    OracleCap(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("missing input {0}; run the producing subcommand first")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Snapshot { path: PathBuf, source: SnapshotError },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: ManifestError },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: TableError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Aborted { .. } | Self::Evolution(_) => exit::ABORTED,
            Self::Incompatible(_) | Self::Snapshot { .. } | Self::Manifest { .. } => exit::INCOMPATIBLE,
            Self::OracleCap(_) => exit::ORACLE_CAP,
            Self::Io { .. } | Self::ValidationFailed(_) | Self::Missing(_) | Self::Table { .. } => exit::FAILURE,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}
