use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad invocation: unknown or missing flag, invalid option value.
    #[error("{0}")]
    Usage(String),
    /// Input files exist but their content is unusable.
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] bsen_core::Error),
}

impl Error {
    pub fn data(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Data { path: path.as_ref().to_path_buf(), msg: msg.into() }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit status: 1 for usage errors, 2 for everything data-related.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

pub(crate) trait CoreContext<T> {
    /// Attaches the file that produced a core error.
    fn in_file(self, path: &Path) -> Result<T>;
}

impl<T> CoreContext<T> for bsen_core::Result<T> {
    fn in_file(self, path: &Path) -> Result<T> {
        self.map_err(|e| Error::data(path, e.to_string()))
    }
}
