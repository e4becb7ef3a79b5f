use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] projpost::Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
    #[error("{0} identity check(s) failed: {1}")]
    Identities(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 1 for bad input, 2 for numerical failures, 3 for configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(projpost::Error::Config(_)) => 3,
            CliError::Identities(..) => 2,
            CliError::Config(_) | CliError::Toml(_) => 3,
            _ => 1,
        }
    }
}
