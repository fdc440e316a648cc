//! Deterministic simulation of a permissioned network running the redaction
//! lifecycle.
//!
//! One honest sealer produces a block per logical tick. Every message sent at
//! tick `t` is delivered at `t + 1`, in send order, to each receiver's inbox.
//! Honest nodes touch their replica only through validated messages:
//! `append_block` for new blocks and `apply_redaction` (after chameleon,
//! version and local-approval checks) for executed redactions.
//!
//! A run is fully determined by its [`SimConfig`]; the drop fault model draws
//! from its own seeded stream so it does not perturb transaction randomness.

mod engine;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chamhash::SUPPORTED_SECURITY_BITS;
use crate::governance::{GovernanceConfig, Mode, NodeId};

pub use engine::{divergence_check, run_simulation, SimMessage, SimNode, SimPayload, Simulation};
pub use report::{
    Divergence, DivergenceReport, NodeSummary, RedactionOutcome, Rejection, ResyncEvent,
    SafetyReport, SimReport, REPORT_FORMAT_TAG,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("simulation config: {0}")]
    Config(String),
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Config(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sealer,
    Voter,
    Observer,
    Adversary,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Sealer => "sealer",
            Role::Voter => "voter",
            Role::Observer => "observer",
            Role::Adversary => "adversary",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryBehavior {
    /// Rewrites a payload without the trapdoor and announces it as executed.
    ForgeRedactionWithoutKey,
    /// Rebroadcasts the pre-redaction version of a transaction after a redaction.
    ReplayOldVersion,
}

impl FromStr for AdversaryBehavior {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "forge-redaction-without-key" => Ok(Self::ForgeRedactionWithoutKey),
            "replay-old-version" => Ok(Self::ReplayOldVersion),
            _ => config_err(format!("unknown adversary behavior {s:?}")),
        }
    }
}

impl fmt::Display for AdversaryBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ForgeRedactionWithoutKey => "forge-redaction-without-key",
            Self::ReplayOldVersion => "replay-old-version",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    NewBlock,
    RedactionProposal,
    Vote,
    RedactionExecuted,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::NewBlock => "NewBlock",
            MessageKind::RedactionProposal => "RedactionProposal",
            MessageKind::Vote => "Vote",
            MessageKind::RedactionExecuted => "RedactionExecuted",
        })
    }
}

/// A probability in `[0, 1]` kept as an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Result<Self, SimError> {
        if den == 0 || num > den {
            return config_err(format!("rate {num}/{den} not in [0, 1]"));
        }
        Ok(Self { num, den })
    }

    pub fn always() -> Self {
        Self { num: 1, den: 1 }
    }
}

impl FromStr for Rate {
    type Err = SimError;

    /// `a/b` or a decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimError::Config(format!("invalid rate {s:?}"));
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
        let frac: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Self::new(num, den)
    }
}

impl TryFrom<String> for Rate {
    type Error = SimError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        format!("{}/{}", r.num, r.den)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultModel {
    #[default]
    None,
    /// Drops each matching delivery with probability `rate`. `target` and
    /// `message` narrow the filter to one receiver and one message kind.
    Drop {
        rate: Rate,
        #[serde(default)]
        target: Option<NodeId>,
        #[serde(default)]
        message: Option<MessageKind>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<AdversaryBehavior>,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, role: Role) -> Self {
        Self {
            id: NodeId::new(id),
            role,
            behavior: None,
        }
    }
}

/// A redaction proposed when the sealer reaches `at_height`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledRedaction {
    pub at_height: u64,
    /// Height of the block holding the target transaction.
    pub block: u64,
    pub tx_index: usize,
    pub new_payload: String,
    /// Defaults to the sealer, or to the first registered voter in public-trapdoor mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposer: Option<NodeId>,
    /// Voters that vote against (public-trapdoor) or withhold their share (consortium).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reject_voters: Vec<NodeId>,
}

fn default_bits() -> u32 {
    64
}

fn default_txs_per_block() -> usize {
    3
}

/// Simulation input, stored as TOML:
///
/// ```toml
/// seed = 42
/// blocks_to_seal = 100
/// txs_per_block = 3
///
/// [governance]
/// mode = "central"
///
/// [[nodes]]
/// id = "sealer"
/// role = "sealer"
///
/// [[nodes]]
/// id = "n1"
/// role = "observer"
///
/// [[redactions]]
/// at_height = 20
/// block = 5
/// tx_index = 1
/// new_payload = "removed"
///
/// [fault]
/// kind = "drop"
/// rate = "1"
/// target = "n1"
/// message = "redaction-executed"
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default = "default_bits")]
    pub security_bits: u32,
    pub blocks_to_seal: u64,
    #[serde(default = "default_txs_per_block")]
    pub txs_per_block: usize,
    pub governance: GovernanceConfig,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub redactions: Vec<ScheduledRedaction>,
    #[serde(default)]
    pub fault: FaultModel,
}

impl SimConfig {
    /// `node_count` honest nodes: one sealer and `node_count - 1` observers.
    pub fn honest(node_count: usize, seed: u64, blocks_to_seal: u64) -> Self {
        let mut nodes = vec![NodeSpec::new("sealer", Role::Sealer)];
        nodes.extend((1..node_count).map(|i| NodeSpec::new(format!("n{i}"), Role::Observer)));
        Self {
            seed,
            security_bits: default_bits(),
            blocks_to_seal,
            txs_per_block: default_txs_per_block(),
            governance: GovernanceConfig::central(),
            nodes,
            redactions: Vec::new(),
            fault: FaultModel::None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn sealer(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.role == Role::Sealer)
    }

    pub fn voter_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == Role::Voter)
    }

    /// Who opens scheduled redaction `r`.
    pub fn proposer_of(&self, r: &ScheduledRedaction) -> Option<NodeId> {
        r.proposer.clone().or_else(|| match self.governance.mode {
            Mode::PublicTrapdoor => self.governance.voters.first().cloned(),
            _ => self.sealer().map(|s| s.id.clone()),
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !SUPPORTED_SECURITY_BITS.contains(&self.security_bits) {
            return config_err(format!(
                "security_bits {} not in {:?}",
                self.security_bits, SUPPORTED_SECURITY_BITS
            ));
        }
        if self.blocks_to_seal == 0 || self.txs_per_block == 0 {
            return config_err("blocks_to_seal and txs_per_block must be positive");
        }
        self.governance
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;

        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.0.is_empty() || !ids.insert(&n.id) {
                return config_err(format!("node id {:?} empty or duplicated", n.id.0));
            }
            match (n.role, n.behavior) {
                (Role::Sealer, Some(_)) => {
                    return config_err(format!("sealer {} must be honest", n.id))
                }
                (Role::Adversary, None) => {
                    return config_err(format!("adversary {} has no behavior", n.id))
                }
                (Role::Voter | Role::Observer, Some(_)) => {
                    return config_err(format!("{} has a behavior but is not an adversary", n.id))
                }
                _ => {}
            }
        }
        let sealers = self.nodes.iter().filter(|n| n.role == Role::Sealer).count();
        if sealers != 1 {
            return config_err(format!("need exactly one sealer, found {sealers}"));
        }

        let is_voter_node = |id: &NodeId| self.node(id).is_some_and(|n| n.role == Role::Voter);
        match self.governance.mode {
            Mode::PublicTrapdoor => {
                if let Some(v) = self.governance.voters.iter().find(|v| !is_voter_node(v)) {
                    return config_err(format!("governance voter {v} is not a voter node"));
                }
            }
            Mode::Consortium => {
                let holders = self.voter_nodes().count();
                if holders != self.governance.share_count {
                    return config_err(format!(
                        "consortium has n = {} shares but {holders} voter nodes to hold them",
                        self.governance.share_count
                    ));
                }
            }
            Mode::Central => {}
        }

        for (i, r) in self.redactions.iter().enumerate() {
            let ctx = format!("redaction {}", i + 1);
            if r.block == 0 || r.block >= r.at_height || r.at_height > self.blocks_to_seal {
                return config_err(format!(
                    "{ctx}: need 1 <= block < at_height <= blocks_to_seal"
                ));
            }
            if r.tx_index >= self.txs_per_block {
                return config_err(format!("{ctx}: tx_index out of range"));
            }
            let proposer = self
                .proposer_of(r)
                .ok_or_else(|| SimError::Config(format!("{ctx}: no proposer")))?;
            let Some(spec) = self.node(&proposer) else {
                return config_err(format!("{ctx}: unknown proposer {proposer}"));
            };
            if spec.role == Role::Adversary {
                return config_err(format!("{ctx}: proposer must be honest"));
            }
            if self.governance.mode == Mode::PublicTrapdoor && !self.governance.is_voter(&proposer)
            {
                return config_err(format!(
                    "{ctx}: proposer {proposer} is not a registered voter"
                ));
            }
            if self.governance.mode == Mode::Central && !r.reject_voters.is_empty() {
                return config_err(format!("{ctx}: central mode has no voters"));
            }
            if let Some(v) = r.reject_voters.iter().find(|v| !is_voter_node(v)) {
                return config_err(format!("{ctx}: {v} is not a voter node"));
            }
        }

        if let FaultModel::Drop {
            target: Some(t), ..
        } = &self.fault
        {
            if self.node(t).is_none() {
                return config_err(format!("fault target {t} is not a node"));
            }
        }
        Ok(())
    }
}

/// Adds an adversary node with `behavior` (by name) to `config`.
pub fn inject_adversary(config: &SimConfig, behavior: &str) -> Result<SimConfig, SimError> {
    let behavior: AdversaryBehavior = behavior.parse()?;
    let mut out = config.clone();
    let taken = |id: &str| out.nodes.iter().any(|n| n.id.0 == id);
    let id = (0..)
        .map(|k| {
            if k == 0 {
                "mallory".to_string()
            } else {
                format!("mallory{k}")
            }
        })
        .find(|id| !taken(id))
        .expect("unbounded");
    out.nodes.push(NodeSpec {
        id: NodeId(id),
        role: Role::Adversary,
        behavior: Some(behavior),
    });
    out.validate()?;
    Ok(out)
}
