use std::path::{Path, PathBuf};

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: skyloc_core::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: skyloc_core::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: skyloc_core::Error,
    },
    #[error("output {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory {0} is locked by another run (remove the lock file if no run is active)")]
    Locked(PathBuf),
    #[error("input {role} ({path}) changed since the manifest was written")]
    InputChanged { role: String, path: PathBuf },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn input(path: &Path, source: impl Into<skyloc_core::Error>) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }

    pub fn config_file(path: &Path, source: impl Into<skyloc_core::Error>) -> Self {
        CliError::ConfigFile {
            path: path.to_path_buf(),
            source: source.into(),
        }
    }

    /// 2 config error, 3 data error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } | CliError::Locked(_) => 2,
            CliError::Input { .. } | CliError::Output { .. } | CliError::InputChanged { .. } => 3,
            CliError::Stage { source, .. } => {
                if source.is_numerical() {
                    4
                } else if source.is_data_error() {
                    3
                } else {
                    2
                }
            }
        }
    }
}

/// Labels a library error with the stage that raised it.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageExt<T> for skyloc_core::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
