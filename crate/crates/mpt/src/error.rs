use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}:{line}: unknown label `{label}`", path.display())]
    UnknownLabel { path: PathBuf, line: usize, label: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{}: corrupt manifest: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] mpt_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const RUNTIME: i32 = 4;
}

impl Error {
    pub fn config(problem: impl Into<String>) -> Self {
        Error::Config(vec![problem.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use mpt_core::Error as C;
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::Parse { .. } | Error::UnknownLabel { .. } | Error::Manifest { .. } => exit::DATA,
            Error::Core(e) => match e {
                C::InvalidConfig(_)
                | C::InvalidTrainingConfig(_)
                | C::InvalidSchedule(_)
                | C::InvalidTemplate { .. }
                | C::InvalidVerbalizer(_)
                | C::EmptyVerbalizer
                | C::TooFewLabels(_)
                | C::EmptyLabelName
                | C::DuplicateLabel(_)
                | C::NonPositiveWeight(_) => exit::CONFIG,
                C::UnknownLabel(_)
                | C::InsufficientClass { .. }
                | C::PoolTooSmall { .. }
                | C::OverlappingIds(_)
                | C::EmptyPool
                | C::EmptyTrainingSet
                | C::EmptyEvaluation
                | C::MissingField { .. } => exit::DATA,
                _ => exit::RUNTIME,
            },
        }
    }
}
