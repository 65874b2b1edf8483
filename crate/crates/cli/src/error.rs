use spikesurgery::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("interrupted after iteration {0}; continue with --resume")]
    Interrupted(usize),

    #[error("replay mismatch in {0:?}")]
    ReplayMismatch(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(CoreError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn missing(section: &str) -> Self {
        CliError::Config(format!("missing required section [{section}]"))
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 2 config error, 3 numerical failure, 4 interrupted and
    /// resumable, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Interrupted(_) => 4,
            CliError::ReplayMismatch(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::MissingClass(_)
                | CoreError::EmptyBatch
                | CoreError::Parse(_) => 2,
                CoreError::Io(_) => 1,
                _ => 3,
            },
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(source) => CliError::Io {
                path: "<stream>".into(),
                source,
            },
            other => CliError::Core(other),
        }
    }
}
