use std::fmt;
use std::process::ExitCode;

/// A command failure paired with its process exit status.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// I/O and anything unexpected.
    Other,
    /// Unreadable or invalid configuration, history or input data.
    Config,
    /// Every trial or evaluation failed numerically.
    Numerical,
}

impl FailureKind {
    pub fn code(self) -> u8 {
        match self {
            FailureKind::Other => 1,
            FailureKind::Config => 2,
            FailureKind::Numerical => 3,
        }
    }
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: FailureKind::Config, error: error.into() }
    }

    pub fn numerical(error: impl Into<anyhow::Error>) -> Self {
        Self { kind: FailureKind::Numerical, error: error.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { kind: FailureKind::Other, error }
    }
}

impl From<std::io::Error> for Failure {
    fn from(error: std::io::Error) -> Self {
        Self { kind: FailureKind::Other, error: error.into() }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Tags an error as a configuration problem.
pub trait ConfigContext<T> {
    fn config_err(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> CmdResult<T> {
        self.map_err(Failure::config)
    }
}
