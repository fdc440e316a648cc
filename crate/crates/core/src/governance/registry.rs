//! Redaction request state machine.
//!
//! ```text
//! Open -> Approved -> Executed
//!      \           \-> Vetoed
//!       -> Rejected
//! ```
//!
//! Votes are keyed by voter, so applying them in any serialized order gives the
//! same tally. A vetoed or rejected request is final; re-proposing needs a new id.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{reconstruct_trapdoor, GovernanceConfig, GovernanceError, Mode, NodeId, TrapdoorShare};
use crate::chamhash::Trapdoor;
use crate::ledger::{Chain, RedactionStamp, RequestId, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Approve,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestState {
    Open,
    Approved,
    Rejected,
    Executed,
    Vetoed,
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestState::Open => "Open",
            RequestState::Approved => "Approved",
            RequestState::Rejected => "Rejected",
            RequestState::Executed => "Executed",
            RequestState::Vetoed => "Vetoed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionTarget {
    pub block_height: u64,
    pub tx_id: TxId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub height: u64,
    pub event: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionRequest {
    pub request_id: RequestId,
    pub target: RedactionTarget,
    #[serde(with = "crate::codec::hex_bytes")]
    pub new_payload: Vec<u8>,
    pub proposer: NodeId,
    pub opened_at: u64,
    pub votes: BTreeMap<NodeId, Vote>,
    pub state: RequestState,
    pub history: Vec<HistoryEntry>,
}

impl RedactionRequest {
    pub fn approvals(&self) -> usize {
        self.votes.values().filter(|v| **v == Vote::Approve).count()
    }

    pub fn rejections(&self) -> usize {
        self.votes.values().filter(|v| **v == Vote::Reject).count()
    }

    fn log(&mut self, height: u64, event: impl Into<String>) {
        self.history.push(HistoryEntry {
            height,
            event: event.into(),
        });
    }
}

/// Proof of being the overseer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OversightCredential {
    pub overseer: NodeId,
}

/// What the executor brings to a redaction.
#[derive(Clone, Debug)]
pub enum AuthorityMaterial {
    Trapdoor(Trapdoor),
    Shares(Vec<TrapdoorShare>),
}

#[derive(Default, Serialize, Deserialize)]
struct Book {
    next_id: u64,
    requests: BTreeMap<RequestId, RedactionRequest>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestRegistry {
    config: GovernanceConfig,
    next_id: u64,
    requests: BTreeMap<RequestId, RedactionRequest>,
}

impl RequestRegistry {
    pub fn new(config: GovernanceConfig) -> Result<Self, GovernanceError> {
        config.validate()?;
        Ok(Self {
            config,
            next_id: 1,
            requests: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &GovernanceConfig {
        &self.config
    }

    pub fn request(&self, id: RequestId) -> Result<&RedactionRequest, GovernanceError> {
        self.requests
            .get(&id)
            .ok_or(GovernanceError::UnknownRequest(id.0))
    }

    fn request_mut(&mut self, id: RequestId) -> Result<&mut RedactionRequest, GovernanceError> {
        self.requests
            .get_mut(&id)
            .ok_or(GovernanceError::UnknownRequest(id.0))
    }

    pub fn requests(&self) -> impl Iterator<Item = &RedactionRequest> {
        self.requests.values()
    }

    /// Opens a request with the next free id.
    pub fn open_request(
        &mut self,
        target: RedactionTarget,
        new_payload: Vec<u8>,
        proposer: NodeId,
        height: u64,
    ) -> Result<RequestId, GovernanceError> {
        let id = RequestId(self.next_id);
        self.open_request_with_id(id, target, new_payload, proposer, height)?;
        Ok(id)
    }

    /// Opens a request under an externally assigned id (replicated registries).
    pub fn open_request_with_id(
        &mut self,
        id: RequestId,
        target: RedactionTarget,
        new_payload: Vec<u8>,
        proposer: NodeId,
        height: u64,
    ) -> Result<(), GovernanceError> {
        if self.requests.contains_key(&id) {
            return Err(GovernanceError::DuplicateRequest(id.0));
        }
        if self.config.mode == Mode::PublicTrapdoor && !self.config.is_voter(&proposer) {
            return Err(GovernanceError::NotRegistered(proposer));
        }
        let mut req = RedactionRequest {
            request_id: id,
            target,
            new_payload,
            proposer: proposer.clone(),
            opened_at: height,
            votes: BTreeMap::new(),
            state: RequestState::Open,
            history: Vec::new(),
        };
        req.log(height, format!("opened by {proposer}"));
        if self.config.mode != Mode::PublicTrapdoor {
            req.state = RequestState::Approved;
            req.log(height, format!("auto-approved ({} mode)", self.config.mode));
        }
        self.requests.insert(id, req);
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Records one vote. Votes are accepted at heights `opened_at ..= opened_at + voting_window`.
    pub fn cast_vote(
        &mut self,
        id: RequestId,
        voter: &NodeId,
        vote: Vote,
        height: u64,
    ) -> Result<(), GovernanceError> {
        let mode = self.config.mode;
        let window = self.config.voting_window;
        let registered = self.config.is_voter(voter);
        let req = self.request_mut(id)?;
        if mode != Mode::PublicTrapdoor {
            return Err(GovernanceError::NoVoting(mode));
        }
        if req.state != RequestState::Open {
            return Err(GovernanceError::WrongState(req.state, "Open"));
        }
        if !registered {
            return Err(GovernanceError::NotRegistered(voter.clone()));
        }
        let closes_at = req.opened_at + window;
        if height > closes_at || height < req.opened_at {
            return Err(GovernanceError::VotingClosed { closes_at, height });
        }
        if req.votes.contains_key(voter) {
            return Err(GovernanceError::DoubleVote(voter.clone()));
        }
        req.votes.insert(voter.clone(), vote);
        req.log(height, format!("{voter} voted {vote:?}").to_lowercase());
        Ok(())
    }

    /// The state a tally at `height` would produce, without recording it.
    ///
    /// Once the window has closed the rule is `approvals > quorum * voters`.
    /// Before that, the outcome is settled early only when the remaining voters
    /// can no longer change it.
    pub fn peek_tally(&self, id: RequestId, height: u64) -> Result<RequestState, GovernanceError> {
        let req = self.request(id)?;
        if req.state != RequestState::Open {
            return Ok(req.state);
        }
        let voters = self.config.voters.len();
        let approvals = req.approvals();
        let undecided = voters - req.votes.len();
        let quorum = self.config.quorum;
        let closed = height > req.opened_at + self.config.voting_window;
        Ok(if quorum.exceeded_by(approvals, voters) {
            RequestState::Approved
        } else if closed || !quorum.exceeded_by(approvals + undecided, voters) {
            RequestState::Rejected
        } else {
            RequestState::Open
        })
    }

    /// Tallies and records the transition, if any.
    pub fn tally(&mut self, id: RequestId, height: u64) -> Result<RequestState, GovernanceError> {
        let state = self.peek_tally(id, height)?;
        let req = self.request_mut(id)?;
        if req.state != state {
            let (a, r) = (req.approvals(), req.rejections());
            req.state = state;
            req.log(height, format!("tallied {a} approve / {r} reject: {state}"));
        }
        Ok(state)
    }

    /// Overseer veto of an approved, not yet executed request.
    pub fn oversight_veto(
        &mut self,
        id: RequestId,
        credential: &OversightCredential,
        height: u64,
    ) -> Result<RequestState, GovernanceError> {
        if !self.config.oversight_enabled {
            return Err(GovernanceError::OversightDisabled);
        }
        if self.config.overseer.as_ref() != Some(&credential.overseer) {
            return Err(GovernanceError::BadCredential);
        }
        let state = self.tally(id, height)?;
        if state != RequestState::Approved {
            return Err(GovernanceError::WrongState(state, "Approved"));
        }
        let req = self.request_mut(id)?;
        req.state = RequestState::Vetoed;
        req.log(height, format!("vetoed by {}", credential.overseer));
        Ok(RequestState::Vetoed)
    }

    /// Performs an approved redaction on `chain`.
    ///
    /// Central and public-trapdoor modes take the trapdoor itself; consortium mode
    /// takes shares and reconstructs. A wrong trapdoor (including one rebuilt from
    /// too few shares) surfaces as [`GovernanceError::Integrity`]; the chain is then
    /// untouched and the request stays `Approved`.
    pub fn execute_redaction(
        &mut self,
        id: RequestId,
        chain: &mut Chain,
        material: &AuthorityMaterial,
    ) -> Result<RedactionStamp, GovernanceError> {
        let height = chain.tip_height();
        let state = self.tally(id, height)?;
        if state != RequestState::Approved {
            return Err(GovernanceError::Unauthorized(format!(
                "request {id} is {state}, not Approved"
            )));
        }
        let trapdoor = match (self.config.mode, material) {
            (Mode::Central | Mode::PublicTrapdoor, AuthorityMaterial::Trapdoor(t)) => t.clone(),
            (Mode::Consortium, AuthorityMaterial::Shares(shares)) => {
                Trapdoor(reconstruct_trapdoor(shares, chain.key().q())?)
            }
            (mode, _) => {
                return Err(GovernanceError::Unauthorized(format!(
                    "wrong authority material for {mode} mode"
                )));
            }
        };
        let req = self.request(id)?;
        let (target, payload) = (req.target, req.new_payload.clone());
        let stamp = chain
            .redact_transaction(&trapdoor, target.block_height, &target.tx_id, &payload, id)
            .map_err(GovernanceError::from_ledger)?;
        let req = self.request_mut(id)?;
        req.state = RequestState::Executed;
        req.log(height, "executed");
        Ok(stamp)
    }

    /// Marks an approved request as executed elsewhere (a replica applying a broadcast redaction).
    pub fn record_executed(&mut self, id: RequestId, height: u64) -> Result<(), GovernanceError> {
        let state = self.tally(id, height)?;
        if state != RequestState::Approved {
            return Err(GovernanceError::WrongState(state, "Approved"));
        }
        let req = self.request_mut(id)?;
        req.state = RequestState::Executed;
        req.log(height, "executed (remote)");
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let book = Book {
            next_id: self.next_id,
            requests: self.requests.clone(),
        };
        serde_json::to_string_pretty(&book).expect("serializable") + "\n"
    }

    pub fn from_json(config: GovernanceConfig, text: &str) -> Result<Self, GovernanceError> {
        config.validate()?;
        let book: Book = serde_json::from_str(text)
            .map_err(|e| GovernanceError::Config(format!("request registry: {e}")))?;
        Ok(Self {
            config,
            next_id: book.next_id.max(1),
            requests: book.requests,
        })
    }
}
