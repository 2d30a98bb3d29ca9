use std::fmt;
use std::process::ExitCode;

/// Why a command stopped, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable files, schema violations: exit 2.
    Config(String),
    /// A numerical-domain error from the library: exit 3.
    Numerical(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(2),
            Failure::Numerical(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<npp_core::Error> for Failure {
    fn from(e: npp_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;
