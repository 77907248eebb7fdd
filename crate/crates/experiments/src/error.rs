use thiserror::Error;

/// Failures surfaced by the experiment commands, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A library error raised inside a named stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: truncgauss::Error,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for bad input, 3 for numerical trouble, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use truncgauss::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } => match source {
                E::InvalidInput(_) | E::DimensionMismatch { .. } | E::SizeLimit(_) | E::Format(_) => 2,
                E::Factorization(_) | E::LowMass { .. } | E::InsufficientData { .. } | E::NumericalOverflow(_) => 3,
                E::Io(_) => 1,
            },
            CliError::Io { .. } => 1,
        }
    }
}

/// Tags library errors with the stage that raised them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for truncgauss::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

pub type CliResult<T> = Result<T, CliError>;
