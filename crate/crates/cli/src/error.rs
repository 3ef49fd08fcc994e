use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    /// Bad data in the points file; `row` counts data rows from 1.
    #[error("{path}, row {row}: {message}")]
    Points {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{0}")]
    Solver(#[from] entroball::Error),
}

impl CliError {
    /// 2 when a solver gave up, 1 for everything caused by the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(entroball::Error::InfeasiblePolytope { .. })
            | CliError::Solver(entroball::Error::Lp(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
