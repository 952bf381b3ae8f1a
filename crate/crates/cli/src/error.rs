use std::path::PathBuf;

pub type CliResult<T> = Result<T, CliError>;

/// Everything a command can fail with. Each variant maps to a stable code
/// printed on the single error line.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: row {row}: {message}", path.display())]
    Data { path: PathBuf, row: usize, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] dpmiv_core::Error),
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "E_IO",
            CliError::Data { .. } => "E_DATA",
            CliError::Config(_) => "E_CONFIG",
            CliError::Model(_) => "E_MODEL",
            CliError::Format { .. } => "E_FORMAT",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data { .. } => 4,
            CliError::Io { .. } => 5,
            CliError::Model(_) => 6,
            CliError::Format { .. } => 7,
        }
    }

    /// `error[CODE]: message` on one line.
    pub fn report_line(&self) -> String {
        let text = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code(), text)
    }
}
