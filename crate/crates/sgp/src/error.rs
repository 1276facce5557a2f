use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{what}: bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { what: &'static str, found: u32, expected: u32 },
    #[error("{what}: unsupported version {found} (this build reads version {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },
    #[error("{what}: truncated at byte {offset}, needed {needed} more bytes")]
    Truncated { what: &'static str, offset: usize, needed: usize },
    #[error("{0}")]
    Format(String),
    #[error("image file has {images} entries but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sgp_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input (config, missing or malformed
    /// files), 3 for numerical aborts during training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) => match e {
                sgp_core::Error::Numerical(_) | sgp_core::Error::NoConvergence { .. } | sgp_core::Error::NonFinite { .. } => 3,
                sgp_core::Error::Config(_) | sgp_core::Error::InvalidLabel { .. } => 2,
                _ => 1,
            },
            Error::Config(_)
            | Error::BadMagic { .. }
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::Format(_)
            | Error::CountMismatch { .. } => 2,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}
