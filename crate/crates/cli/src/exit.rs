//! Exit-code contract: 0 ok, 1 partial failures, 2 input or format errors,
//! 3 integrity errors, 4 missing artifacts.

use std::fmt;
use std::process::ExitCode;

pub const PARTIAL: u8 = 1;
pub const INPUT: u8 = 2;
pub const INTEGRITY: u8 = 3;
pub const MISSING: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: INPUT,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self {
            code: MISSING,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<bintse::Error> for CliError {
    fn from(e: bintse::Error) -> Self {
        let code = match e {
            bintse::Error::Integrity(_) => INTEGRITY,
            _ => INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(format!("json: {e}"))
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::input(format!("{e:#}"))
    }
}

pub fn finish(failures: usize) -> ExitCode {
    if failures > 0 {
        ExitCode::from(PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}
