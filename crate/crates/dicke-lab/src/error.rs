// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use dicke_core::Error as CoreError;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Config,
    Numerical,
    Data,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Config => 3,
            Kind::Numerical => 4,
            Kind::Data => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Numerical => "numerical",
            Kind::Data => "data",
        }
    }
}

#[derive(Debug)]
pub struct LabError {
    pub kind: Kind,
    pub message: String,
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(m: impl Into<String>) -> Self {
        Self::new(Kind::Usage, m)
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self::new(Kind::Config, m)
    }

    pub fn data(m: impl Into<String>) -> Self {
        Self::new(Kind::Data, m)
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    /// `error kind=<kind> code=<n> message=<text>` on a single line.
    pub fn line(&self) -> String {
        let msg: String = self
            .message
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        format!(
            "error kind={} code={} message={}",
            self.kind.name(),
            self.kind.exit_code(),
            msg
        )
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for LabError {}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Config(_) => Kind::Config,
            CoreError::Domain(_)
            | CoreError::Singularity(_)
            | CoreError::NonConvergence { .. }
            | CoreError::Unrealizable { .. } => Kind::Numerical,
            CoreError::Data(_) | CoreError::Io(_) => Kind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}
