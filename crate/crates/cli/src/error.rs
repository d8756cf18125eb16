use std::fmt;
use std::process::ExitCode;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or config values.
    Config(String),
    /// Unreadable or malformed input data (IDX files, model files, reports).
    Input(String),
    /// Anything that went wrong after the inputs were accepted.
    Runtime(String),
    /// Stopped by the user after flushing partial results.
    Interrupted,
}

impl CliError {
    pub const CONFIG: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const RUNTIME: u8 = 4;
    pub const INTERRUPTED: u8 = 130;

    /// Classifies a failure while reading inputs.
    pub fn input(e: hdfuzz_core::Error) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Input(e.to_string())
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) => Self::CONFIG,
            Self::Input(_) => Self::INPUT,
            Self::Runtime(_) => Self::RUNTIME,
            Self::Interrupted => Self::INTERRUPTED,
        })
    }
}

impl From<hdfuzz_core::Error> for CliError {
    fn from(e: hdfuzz_core::Error) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else if e.is_parse() {
            Self::Input(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Input(m) => write!(f, "input error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
            Self::Interrupted => write!(f, "interrupted; partial results written"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
