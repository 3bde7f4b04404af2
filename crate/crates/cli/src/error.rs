use std::fmt;

use forge_core::dataset::RecordError;
use forge_core::mmd::{MmdError, VldgError};
use forge_core::provider::ProviderError;
use forge_core::runs::RunError;

/// Error categories, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Io,
    Provider,
    Validation,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Io => 3,
            Kind::Provider => 4,
            Kind::Validation => 5,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Kind::Config => "config error",
            Kind::Io => "io error",
            Kind::Provider => "provider error",
            Kind::Validation => "validation error",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.kind.label(), self.error)
    }
}

impl CliError {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Validation, anyhow::anyhow!("{msg}"))
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(Kind::Io, anyhow::anyhow!("{}: {e}", path.display()))
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        Self::new(Kind::Validation, e)
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        let kind = match &e {
            RunError::Io { .. } => Kind::Io,
            RunError::SettingsChanged { .. } => Kind::Config,
            RunError::Record(r) => return r.clone().into(),
            RunError::Journal { .. } | RunError::Incomplete(_) => Kind::Validation,
        };
        Self::new(kind, e)
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        let kind = match &e {
            ProviderError::Session(_) => Kind::Io,
            _ => Kind::Provider,
        };
        Self::new(kind, e)
    }
}

impl From<VldgError> for CliError {
    fn from(e: VldgError) -> Self {
        let kind = match &e {
            VldgError::Io { .. } => Kind::Io,
            _ => Kind::Validation,
        };
        Self::new(kind, e)
    }
}

impl From<MmdError> for CliError {
    fn from(e: MmdError) -> Self {
        Self::new(Kind::Validation, e)
    }
}
