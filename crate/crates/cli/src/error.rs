use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingData(String),

    #[error(transparent)]
    Core(#[from] tropmorph::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for bad configuration, 3 for missing data or checkpoints, 4 for
    /// numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingData(_) => 3,
            CliError::Core(tropmorph::Error::NumericFailure(_)) => 4,
            CliError::Core(tropmorph::Error::Lp(_)) => 4,
            CliError::Core(tropmorph::Error::InvalidParameter(_)) => 2,
            _ => 1,
        }
    }
}
