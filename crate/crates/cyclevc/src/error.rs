use std::path::PathBuf;

use thiserror::Error;

/// Problems with the bytes of a feature or checkpoint file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated: needs {needed} bytes, has {got}")]
    Truncated { needed: u64, got: u64 },
    #[error("dimensions {q}x{t} do not fit in memory")]
    DimensionOverflow { q: u64, t: u64 },
    #[error("unsupported format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("corrupt: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] cyclevc_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {kind}", path.display())]
    Format { path: PathBuf, kind: FormatError },
    #[error("{0}")]
    Config(String),
    #[error("checkpoint does not match the configured architecture: {0}")]
    ArchitectureMismatch(String),
    #[error("files without a partner: {}", .0.join(", "))]
    Orphans(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

/// An error tagged with the process exit status it should produce.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

impl Failure {
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
}

pub trait Stage<T> {
    /// Marks the error as an input problem found before any compute.
    fn validation(self) -> Result<T, Failure>;
    /// Marks the error as a failure while doing the work.
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn validation(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: Failure::VALIDATION,
            error: e.into(),
        })
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: Failure::RUNTIME,
            error: e.into(),
        })
    }
}
