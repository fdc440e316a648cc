//! Redaction authority models.
//!
//! - `Central`: one authority holds the trapdoor. Requests are auto-approved on
//!   open so that every redaction still passes through the audited state machine.
//! - `Consortium`: the trapdoor is Shamir-shared; execution reconstructs it from
//!   the supplied shares. Requests are auto-approved; the shares are the consent.
//! - `PublicTrapdoor`: anyone can read the trapdoor, so execution is gated by a
//!   vote of the registered voters.
//!
//! With `oversight_enabled`, a designated overseer may veto an approved request
//! before it executes.

mod registry;
mod shamir;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::LedgerError;

pub use registry::{
    AuthorityMaterial, HistoryEntry, OversightCredential, RedactionRequest, RedactionTarget,
    RequestRegistry, RequestState, Vote,
};
pub use shamir::{reconstruct_trapdoor, split_trapdoor, ShareFile, TrapdoorShare};

pub const DEFAULT_VOTING_WINDOW: u64 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GovernanceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter error: {0}")]
    Params(String),
    #[error("duplicate share index {0}")]
    DuplicateShareIndex(u64),
    #[error("unknown request {0}")]
    UnknownRequest(u64),
    #[error("request {0} already exists")]
    DuplicateRequest(u64),
    #[error("{0} is not a registered voter")]
    NotRegistered(NodeId),
    #[error("{0} already voted")]
    DoubleVote(NodeId),
    #[error("voting window closed at height {closes_at}, current height {height}")]
    VotingClosed { closes_at: u64, height: u64 },
    #[error("request is {0}, expected {1}")]
    WrongState(RequestState, &'static str),
    #[error("voting is not used in {0} mode")]
    NoVoting(Mode),
    #[error("not authorized: {0}")]
    Unauthorized(String),
    #[error("integrity failure: {0}")]
    Integrity(String),
    #[error("oversight is disabled")]
    OversightDisabled,
    #[error("credential does not belong to the overseer")]
    BadCredential,
    #[error("ledger: {0}")]
    Ledger(String),
}

impl GovernanceError {
    pub(crate) fn from_ledger(e: LedgerError) -> Self {
        match e {
            LedgerError::Unauthorized(m) => GovernanceError::Unauthorized(m),
            LedgerError::Integrity { tx_id, reason } => {
                GovernanceError::Integrity(format!("{tx_id}: {reason}"))
            }
            other => GovernanceError::Ledger(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Central,
    Consortium,
    PublicTrapdoor,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Central => "central",
            Mode::Consortium => "consortium",
            Mode::PublicTrapdoor => "public-trapdoor",
        })
    }
}

/// A fraction in `(0, 1]`; approval needs strictly more than `quorum * voters`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quorum {
    num: u64,
    den: u64,
}

impl Quorum {
    pub fn new(num: u64, den: u64) -> Result<Self, GovernanceError> {
        if den == 0 || num == 0 || num > den {
            return Err(GovernanceError::Config(format!(
                "quorum {num}/{den} not in (0, 1]"
            )));
        }
        Ok(Self { num, den })
    }

    /// `approvals > quorum * voters`, in exact integer arithmetic.
    pub fn exceeded_by(&self, approvals: usize, voters: usize) -> bool {
        approvals as u128 * self.den as u128 > self.num as u128 * voters as u128
    }
}

impl Default for Quorum {
    fn default() -> Self {
        Self { num: 1, den: 2 }
    }
}

impl FromStr for Quorum {
    type Err = GovernanceError;

    /// Accepts `a/b` or a decimal such as `0.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GovernanceError::Config(format!("invalid quorum {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            return Self::new(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            );
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = int.parse().map_err(|_| bad())?;
        let frac_val: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Self::new(num, den)
    }
}

impl TryFrom<String> for Quorum {
    type Error = GovernanceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Quorum> for String {
    fn from(q: Quorum) -> String {
        format!("{}/{}", q.num, q.den)
    }
}

/// Governance configuration, stored as TOML:
///
/// ```toml
/// mode = "public-trapdoor"
/// t = 3
/// n = 5
/// quorum = "1/2"
/// voting_window = 10
/// oversight_enabled = true
/// overseer = "regulator"
/// voters = ["alice", "bob", "carol"]
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceConfig {
    pub mode: Mode,
    #[serde(rename = "t", default = "one")]
    pub threshold: usize,
    #[serde(rename = "n", default = "one")]
    pub share_count: usize,
    #[serde(default)]
    pub quorum: Quorum,
    #[serde(default = "default_window")]
    pub voting_window: u64,
    #[serde(default)]
    pub oversight_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overseer: Option<NodeId>,
    #[serde(default)]
    pub voters: Vec<NodeId>,
}

fn one() -> usize {
    1
}

fn default_window() -> u64 {
    DEFAULT_VOTING_WINDOW
}

impl GovernanceConfig {
    pub fn central() -> Self {
        Self {
            mode: Mode::Central,
            threshold: 1,
            share_count: 1,
            quorum: Quorum::default(),
            voting_window: DEFAULT_VOTING_WINDOW,
            oversight_enabled: false,
            overseer: None,
            voters: Vec::new(),
        }
    }

    pub fn consortium(threshold: usize, share_count: usize) -> Self {
        Self {
            mode: Mode::Consortium,
            threshold,
            share_count,
            ..Self::central()
        }
    }

    pub fn public_trapdoor(voters: Vec<NodeId>, quorum: Quorum, voting_window: u64) -> Self {
        Self {
            mode: Mode::PublicTrapdoor,
            quorum,
            voting_window,
            voters,
            ..Self::central()
        }
    }

    pub fn with_oversight(mut self, overseer: NodeId) -> Self {
        self.oversight_enabled = true;
        self.overseer = Some(overseer);
        self
    }

    pub fn validate(&self) -> Result<(), GovernanceError> {
        let err = |m: &str| Err(GovernanceError::Config(m.to_string()));
        match self.mode {
            Mode::Consortium if self.threshold == 0 || self.threshold > self.share_count => {
                return err("consortium requires 1 <= t <= n");
            }
            Mode::PublicTrapdoor if self.voters.is_empty() => {
                return err("public-trapdoor mode needs voters")
            }
            Mode::PublicTrapdoor if self.voting_window == 0 => {
                return err("voting window must be positive")
            }
            _ => {}
        }
        let mut sorted = self.voters.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.voters.len() {
            return err("duplicate voter");
        }
        if self.oversight_enabled && self.overseer.is_none() {
            return err("oversight enabled without an overseer");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, GovernanceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| GovernanceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serializable")
    }

    pub fn is_voter(&self, id: &NodeId) -> bool {
        self.voters.contains(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_parsing_and_rule() {
        let half: Quorum = "0.5".parse().unwrap();
        assert_eq!(half, Quorum::new(5, 10).unwrap());
        assert!(half.exceeded_by(3, 5));
        assert!(!half.exceeded_by(2, 4));
        assert!(half.exceeded_by(3, 4));
        assert_eq!("2/3".parse::<Quorum>().unwrap(), Quorum::new(2, 3).unwrap());
        assert!("1".parse::<Quorum>().unwrap().exceeded_by(5, 4));
        assert!(!"1".parse::<Quorum>().unwrap().exceeded_by(4, 4));
        for bad in ["0", "1.5", "3/2", "x", "0/0", "-1"] {
            assert!(bad.parse::<Quorum>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let text = r#"
mode = "public-trapdoor"
quorum = "0.5"
voting_window = 4
oversight_enabled = true
overseer = "regulator"
voters = ["a", "b", "c"]
"#;
        let cfg = GovernanceConfig::from_toml(text).unwrap();
        assert_eq!(cfg.mode, Mode::PublicTrapdoor);
        assert_eq!(cfg.voters.len(), 3);
        assert_eq!(GovernanceConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn config_validation() {
        assert!(GovernanceConfig::consortium(4, 3).validate().is_err());
        assert!(GovernanceConfig::consortium(0, 3).validate().is_err());
        assert!(GovernanceConfig::consortium(3, 5).validate().is_ok());
        assert!(
            GovernanceConfig::public_trapdoor(vec![], Quorum::default(), 10)
                .validate()
                .is_err()
        );
        let mut cfg = GovernanceConfig::central();
        cfg.oversight_enabled = true;
        assert!(cfg.validate().is_err());
        assert!(GovernanceConfig::from_toml("mode = \"central\"\nbogus = 1\n").is_err());
        assert!(GovernanceConfig::from_toml("mode = \"dictator\"\n").is_err());
    }
}
