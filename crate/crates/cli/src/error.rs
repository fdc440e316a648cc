use std::fmt;
use std::process::ExitCode;

use redchain::chamhash::KeyFileError;
use redchain::governance::GovernanceError;
use redchain::ledger::{LedgerError, ParseError};
use redchain::netsim::SimError;

/// Exit statuses are part of the interface: scripts match on them.
#[derive(Debug)]
pub enum CliError {
    /// Local I/O failure or a held lock. Exit 1.
    Io(String),
    /// Bad flags, missing or malformed config. Exit 2.
    Usage(String),
    /// Caller lacks the authority for the action. Exit 3.
    Unauthorized(String),
    /// Data failed verification. Exit 4.
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Unauthorized(_) => 3,
            CliError::Integrity(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "{m}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Unauthorized(m) => write!(f, "not authorized: {m}"),
            CliError::Integrity(m) => write!(f, "integrity failure: {m}"),
        }
    }
}

impl From<GovernanceError> for CliError {
    fn from(e: GovernanceError) -> Self {
        let msg = e.to_string();
        match e {
            GovernanceError::Unauthorized(_)
            | GovernanceError::NotRegistered(_)
            | GovernanceError::DoubleVote(_)
            | GovernanceError::VotingClosed { .. }
            | GovernanceError::WrongState(..)
            | GovernanceError::OversightDisabled
            | GovernanceError::BadCredential => CliError::Unauthorized(msg),
            GovernanceError::Integrity(_) | GovernanceError::Ledger(_) => CliError::Integrity(msg),
            GovernanceError::Config(_)
            | GovernanceError::Params(_)
            | GovernanceError::DuplicateShareIndex(_)
            | GovernanceError::UnknownRequest(_)
            | GovernanceError::DuplicateRequest(_)
            | GovernanceError::NoVoting(_) => CliError::Usage(msg),
        }
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        let msg = e.to_string();
        match e {
            LedgerError::Unauthorized(_) => CliError::Unauthorized(msg),
            LedgerError::PayloadTooLarge { .. }
            | LedgerError::EmptyBlock
            | LedgerError::NotFound { .. }
            | LedgerError::DuplicateTx(_) => CliError::Usage(msg),
            _ => CliError::Integrity(msg),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Parse failures of a data file name the file and line.
pub fn parse_error(path: &std::path::Path, e: ParseError) -> CliError {
    CliError::Integrity(format!("{}: {e}", path.display()))
}

pub fn key_error(path: &std::path::Path, e: KeyFileError) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}
