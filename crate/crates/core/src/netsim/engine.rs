use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::report::{
    Divergence, DivergenceReport, NodeSummary, RedactionOutcome, Rejection, ResyncEvent,
    SafetyReport, SimReport,
};
use super::{AdversaryBehavior, FaultModel, MessageKind, Role, SimConfig, SimError};
use crate::chamhash::ChameleonKeyPair;
use crate::governance::{
    split_trapdoor, AuthorityMaterial, GovernanceError, Mode, NodeId, RedactionTarget,
    RequestRegistry, RequestState, TrapdoorShare, Vote,
};
use crate::ledger::{Block, Chain, RedactionStamp, RedactionUpdate, RequestId, Transaction, TxId};

/// A forging adversary attacks blocks at heights `1, 1 + k, 1 + 2k, ...`.
const ATTACK_INTERVAL: u64 = 10;
/// Extra ticks allowed after the last scheduled event before the run is cut off.
const SETTLE_TICKS: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimPayload {
    NewBlock(Block),
    RedactionProposal {
        request_id: RequestId,
        target: RedactionTarget,
        new_payload: Vec<u8>,
        opened_at: u64,
    },
    Vote {
        request_id: RequestId,
        vote: Vote,
        at: u64,
        /// Consortium mode: the voter's trapdoor share, sent to the sealer only.
        share: Option<TrapdoorShare>,
    },
    RedactionExecuted {
        request_id: RequestId,
        update: RedactionUpdate,
    },
}

impl SimPayload {
    pub fn kind(&self) -> MessageKind {
        match self {
            SimPayload::NewBlock(_) => MessageKind::NewBlock,
            SimPayload::RedactionProposal { .. } => MessageKind::RedactionProposal,
            SimPayload::Vote { .. } => MessageKind::Vote,
            SimPayload::RedactionExecuted { .. } => MessageKind::RedactionExecuted,
        }
    }

    fn request_id(&self) -> Option<RequestId> {
        match self {
            SimPayload::NewBlock(_) => None,
            SimPayload::RedactionProposal { request_id, .. }
            | SimPayload::Vote { request_id, .. }
            | SimPayload::RedactionExecuted { request_id, .. } => Some(*request_id),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimMessage {
    pub sender: NodeId,
    /// Delivery tick.
    pub logical_time: u64,
    pub payload: SimPayload,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DroppedMessage {
    pub time: u64,
    pub kind: MessageKind,
    pub request_id: Option<RequestId>,
}

#[derive(Clone, Debug)]
pub struct SimNode {
    pub id: NodeId,
    pub role: Role,
    pub behavior: Option<AdversaryBehavior>,
    pub chain: Chain,
    pub registry: RequestRegistry,
    pub inbox: VecDeque<SimMessage>,
    pub dropped: Vec<DroppedMessage>,
    share: Option<TrapdoorShare>,
    /// Highest version accepted per transaction.
    versions: BTreeMap<TxId, u64>,
    /// Adversary memory of first-seen transactions.
    originals: BTreeMap<TxId, Transaction>,
    /// Adversary messages queued for its next turn.
    outbox: Vec<SimPayload>,
    accepted: u64,
    rejected: u64,
    resyncs: u64,
}

impl SimNode {
    pub fn is_honest(&self) -> bool {
        self.role != Role::Adversary
    }

    /// Highest accepted version of `tx_id`, as tracked by this node.
    pub fn accepted_version(&self, tx_id: &TxId) -> Option<u64> {
        self.versions.get(tx_id).copied()
    }
}

enum Outcome {
    Applied,
    Ignored,
    Rejected(String),
    Resync(String),
}

/// Compares every honest replica against the sealer's, byte for byte.
pub fn divergence_check(nodes: &[SimNode]) -> DivergenceReport {
    let Some(reference) = nodes
        .iter()
        .find(|n| n.role == Role::Sealer)
        .or_else(|| nodes.iter().find(|n| n.is_honest()))
    else {
        return DivergenceReport {
            reference: NodeId::new(""),
            compared: 0,
            divergent: Vec::new(),
        };
    };
    let stamps = |chain: &Chain| -> BTreeSet<RequestId> {
        chain
            .blocks()
            .iter()
            .flat_map(|b| b.header.redaction_meta.iter().map(|s| s.request_id))
            .collect()
    };
    let ref_text = reference.chain.to_text();
    let ref_stamps = stamps(&reference.chain);
    let mut report = DivergenceReport {
        reference: reference.id.clone(),
        compared: 0,
        divergent: Vec::new(),
    };
    for node in nodes
        .iter()
        .filter(|n| n.is_honest() && n.id != reference.id)
    {
        report.compared += 1;
        if node.chain.to_text() == ref_text {
            continue;
        }
        let (ours, theirs) = (reference.chain.blocks(), node.chain.blocks());
        let first = ours
            .iter()
            .zip(theirs)
            .position(|(a, b)| a != b)
            .or_else(|| (ours.len() != theirs.len()).then(|| ours.len().min(theirs.len())));
        let tx_id = first.and_then(|h| {
            let (a, b) = (ours.get(h)?, theirs.get(h)?);
            a.txs
                .iter()
                .zip(&b.txs)
                .find(|(x, y)| x != y)
                .map(|(x, _)| x.tx_id)
        });
        let node_stamps = stamps(&node.chain);
        report.divergent.push(Divergence {
            node: node.id.clone(),
            height: first.map(|h| h as u64),
            tx_id,
            missed_requests: ref_stamps.difference(&node_stamps).copied().collect(),
            dropped_executed: node
                .dropped
                .iter()
                .filter(|d| d.kind == MessageKind::RedactionExecuted)
                .filter_map(|d| d.request_id)
                .collect(),
        });
    }
    report
}

pub fn run_simulation(config: &SimConfig) -> Result<SimReport, SimError> {
    Ok(Simulation::new(config.clone())?.run())
}

pub struct Simulation {
    config: SimConfig,
    key: ChameleonKeyPair,
    nodes: Vec<SimNode>,
    sealer: usize,
    /// Pending deliveries keyed by `(tick, send sequence)`.
    network: BTreeMap<(u64, u64), (usize, SimMessage)>,
    seq: u64,
    time: u64,
    tx_rng: ChaCha20Rng,
    fault_rng: ChaCha20Rng,
    share_holders: BTreeMap<NodeId, u64>,
    collected: BTreeMap<RequestId, BTreeMap<u64, TrapdoorShare>>,
    failed: BTreeMap<RequestId, String>,
    rejections: Vec<Rejection>,
    resync_events: Vec<ResyncEvent>,
    regressions: Vec<String>,
    adversary_acceptances: u64,
    finished: bool,
}

impl Simulation {
    /// Validates the config and sets up every node at genesis. No event runs yet.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let key = ChameleonKeyPair::generate_seeded(config.security_bits, config.seed)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let genesis = Chain::new(key.public.clone());
        let registry = RequestRegistry::new(config.governance.clone())
            .map_err(|e| SimError::Config(e.to_string()))?;

        let mut nodes: Vec<SimNode> = config
            .nodes
            .iter()
            .map(|spec| SimNode {
                id: spec.id.clone(),
                role: spec.role,
                behavior: spec.behavior,
                chain: genesis.clone(),
                registry: registry.clone(),
                inbox: VecDeque::new(),
                dropped: Vec::new(),
                share: None,
                versions: BTreeMap::new(),
                originals: BTreeMap::new(),
                outbox: Vec::new(),
                accepted: 0,
                rejected: 0,
                resyncs: 0,
            })
            .collect();

        let mut share_holders = BTreeMap::new();
        if config.governance.mode == Mode::Consortium {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x5348_4152_4553_0000);
            let shares = split_trapdoor(
                &key.trapdoor.0,
                config.governance.threshold,
                config.governance.share_count,
                key.public.q(),
                &mut rng,
            )
            .map_err(|e| SimError::Config(e.to_string()))?;
            let holders = nodes.iter_mut().filter(|n| n.role == Role::Voter);
            for (node, share) in holders.zip(shares) {
                share_holders.insert(node.id.clone(), share.index);
                node.share = Some(share);
            }
        }

        let sealer = nodes
            .iter()
            .position(|n| n.role == Role::Sealer)
            .expect("validated");
        Ok(Self {
            tx_rng: ChaCha20Rng::seed_from_u64(config.seed),
            fault_rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x4641_554c_5453_0000),
            config,
            key,
            nodes,
            sealer,
            network: BTreeMap::new(),
            seq: 0,
            time: 0,
            share_holders,
            collected: BTreeMap::new(),
            failed: BTreeMap::new(),
            rejections: Vec::new(),
            resync_events: Vec::new(),
            regressions: Vec::new(),
            adversary_acceptances: 0,
            finished: false,
        })
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, id: &NodeId) -> Option<&SimNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Runs to quiescence and returns the report. Calling it again only re-reports.
    pub fn run(&mut self) -> SimReport {
        let last_proposal = self
            .config
            .redactions
            .iter()
            .map(|r| r.at_height)
            .max()
            .unwrap_or(0);
        let horizon = self.config.blocks_to_seal.max(last_proposal)
            + self.config.governance.voting_window
            + SETTLE_TICKS;
        while !self.finished {
            self.step();
            let quiet = self.network.is_empty() && self.nodes.iter().all(|n| n.outbox.is_empty());
            let schedule_done =
                self.time >= self.config.blocks_to_seal && self.time >= last_proposal;
            if (schedule_done && quiet) || self.time >= horizon {
                self.finished = true;
                self.close_open_requests();
            }
        }
        self.report()
    }

    /// Replaces `id`'s replica and registry with copies of the sealer's.
    pub fn resync(&mut self, id: &NodeId) -> Result<(), SimError> {
        let i = self
            .nodes
            .iter()
            .position(|n| &n.id == id)
            .ok_or_else(|| SimError::Config(format!("unknown node {id}")))?;
        self.resync_from_sealer(i, "requested".into());
        Ok(())
    }

    pub fn divergence(&self) -> DivergenceReport {
        divergence_check(&self.nodes)
    }

    pub fn report(&self) -> SimReport {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeSummary {
                id: n.id.clone(),
                role: n.role,
                behavior: n.behavior,
                height: n.chain.tip_height(),
                chain_digest: n.chain.digest(),
                valid: n.chain.validate().is_valid(),
                accepted: n.accepted,
                rejected: n.rejected,
                dropped: n.dropped.len() as u64,
                resyncs: n.resyncs,
            })
            .collect();

        let sealer = &self.nodes[self.sealer];
        let redactions = self
            .config
            .redactions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let id = RequestId(i as u64 + 1);
                let note = self.failed.get(&id).cloned().or_else(|| {
                    let have = self.collected.get(&id).map_or(0, |c| c.len());
                    let t = self.config.governance.threshold;
                    (self.config.governance.mode == Mode::Consortium && have < t)
                        .then(|| format!("{have} of {t} shares received"))
                });
                match sealer.registry.request(id) {
                    Ok(req) => RedactionOutcome {
                        request_id: id,
                        block: r.block,
                        tx_id: Some(req.target.tx_id),
                        state: req.state.to_string(),
                        executed_at: req
                            .history
                            .iter()
                            .find(|h| h.event == "executed")
                            .map(|h| h.height),
                        note: (req.state != RequestState::Executed)
                            .then_some(note)
                            .flatten(),
                    },
                    Err(_) => RedactionOutcome {
                        request_id: id,
                        block: r.block,
                        tx_id: None,
                        state: "NotOpened".into(),
                        executed_at: None,
                        note,
                    },
                }
            })
            .collect();

        let invalid_replicas = self
            .nodes
            .iter()
            .filter(|n| n.is_honest())
            .filter_map(|n| n.chain.validate().failure.map(|f| format!("{}: {f}", n.id)))
            .collect();

        SimReport {
            seed: self.config.seed,
            ticks: self.time,
            key_fingerprint: self.key.public.fingerprint(),
            nodes,
            redactions,
            rejections: self.rejections.clone(),
            resyncs: self.resync_events.clone(),
            divergence: self.divergence(),
            safety: SafetyReport {
                invalid_replicas,
                version_regressions: self.regressions.clone(),
                adversary_acceptances: self.adversary_acceptances,
            },
        }
    }

    fn step(&mut self) {
        self.time += 1;
        self.deliver_due();
        for i in 0..self.nodes.len() {
            while let Some(msg) = self.nodes[i].inbox.pop_front() {
                self.handle(i, msg);
            }
            self.act(i);
        }
    }

    fn deliver_due(&mut self) {
        while let Some(entry) = self.network.first_entry() {
            if entry.key().0 > self.time {
                break;
            }
            let (to, msg) = entry.remove();
            if self.should_drop(to, msg.payload.kind()) {
                self.nodes[to].dropped.push(DroppedMessage {
                    time: self.time,
                    kind: msg.payload.kind(),
                    request_id: msg.payload.request_id(),
                });
            } else {
                self.nodes[to].inbox.push_back(msg);
            }
        }
    }

    fn should_drop(&mut self, to: usize, kind: MessageKind) -> bool {
        let FaultModel::Drop {
            rate,
            target,
            message,
        } = &self.config.fault
        else {
            return false;
        };
        let matches = target.as_ref().is_none_or(|t| t == &self.nodes[to].id)
            && message.is_none_or(|m| m == kind);
        matches && self.fault_rng.gen_range(0..rate.den) < rate.num
    }

    /// Queues `payload` from node `from` to `to`, or to every other node.
    fn send(&mut self, from: usize, to: Option<usize>, payload: SimPayload) {
        let at = self.time + 1;
        let recipients: Vec<usize> = match to {
            Some(r) => vec![r],
            None => (0..self.nodes.len()).filter(|&r| r != from).collect(),
        };
        for r in recipients {
            self.seq += 1;
            let msg = SimMessage {
                sender: self.nodes[from].id.clone(),
                logical_time: at,
                payload: payload.clone(),
            };
            self.network.insert((at, self.seq), (r, msg));
        }
    }

    fn handle(&mut self, i: usize, msg: SimMessage) {
        let kind = msg.payload.kind();
        let from_adversary = self
            .nodes
            .iter()
            .find(|n| n.id == msg.sender)
            .is_some_and(|n| !n.is_honest());
        let sender = msg.sender.clone();
        let outcome = match msg.payload {
            SimPayload::NewBlock(block) => self.on_new_block(i, block),
            SimPayload::RedactionProposal {
                request_id,
                target,
                new_payload,
                opened_at,
            } => self.on_proposal(i, &sender, request_id, target, new_payload, opened_at),
            SimPayload::Vote {
                request_id,
                vote,
                at,
                share,
            } => self.on_vote(i, &sender, request_id, vote, at, share),
            SimPayload::RedactionExecuted { request_id, update } => {
                self.on_executed(i, request_id, update)
            }
        };
        let honest = self.nodes[i].is_honest();
        match outcome {
            Outcome::Applied => {
                self.nodes[i].accepted += 1;
                if from_adversary && honest {
                    self.adversary_acceptances += 1;
                }
            }
            Outcome::Ignored => {}
            Outcome::Rejected(reason) => self.reject(i, sender, kind, reason),
            Outcome::Resync(reason) if i != self.sealer => self.resync_from_sealer(i, reason),
            Outcome::Resync(reason) => self.reject(i, sender, kind, reason),
        }
    }

    fn reject(&mut self, i: usize, sender: NodeId, kind: MessageKind, reason: String) {
        let node = &mut self.nodes[i];
        node.rejected += 1;
        if node.is_honest() {
            self.rejections.push(Rejection {
                time: self.time,
                node: node.id.clone(),
                sender,
                kind,
                reason,
            });
        }
    }

    fn resync_from_sealer(&mut self, i: usize, reason: String) {
        if i == self.sealer {
            return;
        }
        let (chain, registry) = {
            let s = &self.nodes[self.sealer];
            (s.chain.clone(), s.registry.clone())
        };
        let node = &mut self.nodes[i];
        node.chain = chain;
        node.registry = registry;
        node.resyncs += 1;
        self.resync_events.push(ResyncEvent {
            time: self.time,
            node: self.nodes[i].id.clone(),
            reason,
        });
        for h in 1..=self.nodes[i].chain.tip_height() {
            self.track_block(i, h);
        }
    }

    /// Records versions for every transaction in block `height` and checks they never go down.
    fn track_block(&mut self, i: usize, height: u64) {
        let node = &mut self.nodes[i];
        let Some(block) = node.chain.block(height) else {
            return;
        };
        for tx in &block.txs {
            let prev = node.versions.insert(tx.tx_id, tx.version);
            if let Some(prev) = prev.filter(|p| *p > tx.version) {
                node.versions.insert(tx.tx_id, prev);
                if node.role != Role::Adversary {
                    self.regressions.push(format!(
                        "{} tx {} went from version {prev} to {}",
                        node.id, tx.tx_id, tx.version
                    ));
                }
            }
            if node.behavior == Some(AdversaryBehavior::ReplayOldVersion) {
                node.originals.entry(tx.tx_id).or_insert_with(|| tx.clone());
            }
        }
    }

    fn on_new_block(&mut self, i: usize, block: Block) -> Outcome {
        let node = &mut self.nodes[i];
        let tip = node.chain.tip_height();
        let h = block.height();
        if h <= tip {
            return match node.chain.block(h) {
                Some(b) if b.block_hash() == block.block_hash() => Outcome::Ignored,
                _ => Outcome::Rejected(format!("conflicts with local block {h}")),
            };
        }
        if h > tip + 1 {
            return Outcome::Resync(format!("block {h} arrived at local height {tip}"));
        }
        if let Err(e) = node.chain.append_block(block) {
            return Outcome::Rejected(e.to_string());
        }
        self.track_block(i, h);
        if self.nodes[i].behavior == Some(AdversaryBehavior::ForgeRedactionWithoutKey)
            && h % ATTACK_INTERVAL == 1
        {
            self.plan_forgery(i, h);
        }
        Outcome::Applied
    }

    fn on_proposal(
        &mut self,
        i: usize,
        sender: &NodeId,
        id: RequestId,
        target: RedactionTarget,
        new_payload: Vec<u8>,
        opened_at: u64,
    ) -> Outcome {
        let opened = self.nodes[i].registry.open_request_with_id(
            id,
            target,
            new_payload,
            sender.clone(),
            opened_at,
        );
        match opened {
            Ok(()) => {
                self.respond_to_proposal(i, id);
                Outcome::Applied
            }
            Err(GovernanceError::DuplicateRequest(_)) => Outcome::Ignored,
            Err(e) => Outcome::Rejected(e.to_string()),
        }
    }

    fn policy_vote(&self, id: RequestId, voter: &NodeId) -> Vote {
        let rejects =
            id.0.checked_sub(1)
                .and_then(|k| self.config.redactions.get(k as usize))
                .is_some_and(|r| r.reject_voters.contains(voter));
        if rejects {
            Vote::Reject
        } else {
            Vote::Approve
        }
    }

    fn respond_to_proposal(&mut self, i: usize, id: RequestId) {
        let node = &self.nodes[i];
        if node.role != Role::Voter {
            return;
        }
        let voter = node.id.clone();
        let vote = self.policy_vote(id, &voter);
        match self.config.governance.mode {
            Mode::PublicTrapdoor if self.config.governance.is_voter(&voter) => {
                let at = node.chain.tip_height();
                if self.nodes[i]
                    .registry
                    .cast_vote(id, &voter, vote, at)
                    .is_ok()
                {
                    let payload = SimPayload::Vote {
                        request_id: id,
                        vote,
                        at,
                        share: None,
                    };
                    self.send(i, None, payload);
                }
            }
            Mode::Consortium => {
                let Some(share) = node.share.clone() else {
                    return;
                };
                let payload = SimPayload::Vote {
                    request_id: id,
                    vote,
                    at: node.chain.tip_height(),
                    share: (vote == Vote::Approve).then_some(share),
                };
                self.send(i, Some(self.sealer), payload);
            }
            _ => {}
        }
    }

    fn on_vote(
        &mut self,
        i: usize,
        sender: &NodeId,
        id: RequestId,
        vote: Vote,
        at: u64,
        share: Option<TrapdoorShare>,
    ) -> Outcome {
        match self.config.governance.mode {
            Mode::PublicTrapdoor => match self.nodes[i].registry.cast_vote(id, sender, vote, at) {
                Ok(()) => Outcome::Applied,
                Err(e) => Outcome::Rejected(e.to_string()),
            },
            Mode::Consortium if i == self.sealer => {
                if let Err(e) = self.nodes[i].registry.request(id) {
                    return Outcome::Rejected(e.to_string());
                }
                let Some(share) = share else {
                    return Outcome::Applied;
                };
                if self.share_holders.get(sender) != Some(&share.index) {
                    return Outcome::Rejected(format!(
                        "share index {} does not belong to {sender}",
                        share.index
                    ));
                }
                self.collected
                    .entry(id)
                    .or_default()
                    .insert(share.index, share);
                Outcome::Applied
            }
            Mode::Consortium => Outcome::Ignored,
            Mode::Central => Outcome::Rejected("central mode has no voting".into()),
        }
    }

    /// Checks run in order: block known, chameleon verification, version,
    /// local approval of the request, then the ledger's own checks.
    fn on_executed(&mut self, i: usize, id: RequestId, update: RedactionUpdate) -> Outcome {
        let node = &mut self.nodes[i];
        let tip = node.chain.tip_height();
        let tx_id = update.tx.tx_id;
        if node.chain.block(update.height).is_none() {
            return Outcome::Resync(format!(
                "redaction #{id} targets block {} beyond local height {tip}",
                update.height
            ));
        }
        if update.stamp.approved_at > tip {
            return Outcome::Resync(format!(
                "redaction #{id} approved at height {} beyond local height {tip}",
                update.stamp.approved_at
            ));
        }
        let Some((h, index)) = node.chain.locate(&tx_id) else {
            return Outcome::Rejected(format!("unknown transaction {tx_id}"));
        };
        if h != update.height {
            return Outcome::Rejected(format!(
                "transaction {tx_id} is not in block {}",
                update.height
            ));
        }
        let current = &node.chain.blocks()[h as usize].txs[index];
        if current == &update.tx {
            return Outcome::Ignored;
        }
        if update.tx.check(node.chain.key()).is_err() {
            return Outcome::Rejected("chameleon verification failed".into());
        }
        if update.tx.version <= current.version {
            return Outcome::Rejected(format!(
                "stale version {} <= recorded {}",
                update.tx.version, current.version
            ));
        }
        match node.registry.request(id) {
            Ok(req) if req.target.tx_id == tx_id && req.new_payload == update.tx.payload => {}
            Ok(_) => return Outcome::Rejected(format!("update does not match request #{id}")),
            Err(e) => return Outcome::Rejected(e.to_string()),
        }
        match node.registry.peek_tally(id, tip) {
            Ok(RequestState::Approved) => {}
            Ok(state) => return Outcome::Rejected(format!("request #{id} is {state} locally")),
            Err(e) => return Outcome::Rejected(e.to_string()),
        }
        if let Err(e) = node.chain.apply_redaction(&update) {
            return Outcome::Rejected(e.to_string());
        }
        let _ = node.registry.record_executed(id, tip);
        self.track_block(i, h);

        let node = &mut self.nodes[i];
        if node.behavior == Some(AdversaryBehavior::ReplayOldVersion) {
            if let Some(original) = node.originals.get(&tx_id) {
                node.outbox.push(SimPayload::RedactionExecuted {
                    request_id: id,
                    update: RedactionUpdate {
                        height: h,
                        tx: original.clone(),
                        stamp: update.stamp.clone(),
                    },
                });
            }
        }
        Outcome::Applied
    }

    fn plan_forgery(&mut self, i: usize, height: u64) {
        let node = &mut self.nodes[i];
        let Some(original) = node
            .chain
            .block(height)
            .and_then(|b| b.txs.first())
            .cloned()
        else {
            return;
        };
        let mut forged = original.clone();
        forged.payload = format!("forged by {}", node.id).into_bytes();
        forged.version += 1;
        forged.redaction_count += 1;
        let stamp = RedactionStamp {
            tx_id: original.tx_id,
            old_payload_commitment: original.payload_commitment(),
            request_id: RequestId(0),
            approved_at: node.chain.tip_height(),
        };
        node.outbox.push(SimPayload::RedactionExecuted {
            request_id: RequestId(0),
            update: RedactionUpdate {
                height,
                tx: forged,
                stamp,
            },
        });
    }

    fn act(&mut self, i: usize) {
        if i == self.sealer {
            self.seal();
        }
        self.propose(i);
        if i == self.sealer {
            self.execute_ready();
        }
        for payload in std::mem::take(&mut self.nodes[i].outbox) {
            self.send(i, None, payload);
        }
    }

    fn seal(&mut self) {
        if self.time > self.config.blocks_to_seal {
            return;
        }
        let s = self.sealer;
        let txs: Vec<Transaction> = (0..self.config.txs_per_block)
            .map(|k| {
                let payload = format!("h{}:tx{k}:{:016x}", self.time, self.tx_rng.next_u64());
                self.nodes[s]
                    .chain
                    .create_transaction(payload.as_bytes(), &mut self.tx_rng)
                    .expect("payload within limits")
            })
            .collect();
        let block = self.nodes[s]
            .chain
            .seal_block(txs, self.time)
            .expect("fresh transactions")
            .clone();
        self.track_block(s, block.height());
        self.send(s, None, SimPayload::NewBlock(block));
    }

    fn propose(&mut self, i: usize) {
        let due: Vec<(usize, super::ScheduledRedaction)> = self
            .config
            .redactions
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.at_height == self.time
                    && self.config.proposer_of(r).as_ref() == Some(&self.nodes[i].id)
            })
            .map(|(k, r)| (k, r.clone()))
            .collect();
        for (k, r) in due {
            let id = RequestId(k as u64 + 1);
            let node = &mut self.nodes[i];
            let Some(tx) = node.chain.block(r.block).map(|b| b.txs[r.tx_index].tx_id) else {
                self.failed
                    .insert(id, format!("proposer {} lacked block {}", node.id, r.block));
                continue;
            };
            let target = RedactionTarget {
                block_height: r.block,
                tx_id: tx,
            };
            let payload = r.new_payload.clone().into_bytes();
            let opened_at = node.chain.tip_height();
            let proposer = node.id.clone();
            if let Err(e) =
                node.registry
                    .open_request_with_id(id, target, payload.clone(), proposer, opened_at)
            {
                self.failed.insert(id, e.to_string());
                continue;
            }
            self.send(
                i,
                None,
                SimPayload::RedactionProposal {
                    request_id: id,
                    target,
                    new_payload: payload,
                    opened_at,
                },
            );
            self.respond_to_proposal(i, id);
        }
    }

    /// Sealer: executes every request that is approved and has its authority material.
    fn execute_ready(&mut self) {
        let s = self.sealer;
        let ids: Vec<RequestId> = self.nodes[s]
            .registry
            .requests()
            .filter(|r| matches!(r.state, RequestState::Open | RequestState::Approved))
            .map(|r| r.request_id)
            .filter(|id| !self.failed.contains_key(id))
            .collect();
        for id in ids {
            let node = &mut self.nodes[s];
            let tip = node.chain.tip_height();
            if node.registry.tally(id, tip) != Ok(RequestState::Approved) {
                continue;
            }
            let material = match self.config.governance.mode {
                Mode::Central | Mode::PublicTrapdoor => {
                    AuthorityMaterial::Trapdoor(self.key.trapdoor.clone())
                }
                Mode::Consortium => {
                    let t = self.config.governance.threshold;
                    match self.collected.get(&id) {
                        Some(c) if c.len() >= t => {
                            AuthorityMaterial::Shares(c.values().take(t).cloned().collect())
                        }
                        _ => continue,
                    }
                }
            };
            match node
                .registry
                .execute_redaction(id, &mut node.chain, &material)
            {
                Ok(stamp) => {
                    let update = node
                        .chain
                        .redaction_update(&stamp.tx_id)
                        .expect("just redacted");
                    self.track_block(s, update.height);
                    self.send(
                        s,
                        None,
                        SimPayload::RedactionExecuted {
                            request_id: id,
                            update,
                        },
                    );
                }
                Err(e) => {
                    self.failed.insert(id, e.to_string());
                }
            }
        }
    }

    /// Voting windows are in block heights, which stop advancing once sealing
    /// ends; requests still open at the end are tallied as if their window had closed.
    fn close_open_requests(&mut self) {
        let window = self.config.governance.voting_window;
        let s = &mut self.nodes[self.sealer];
        let open: Vec<(RequestId, u64)> = s
            .registry
            .requests()
            .filter(|r| r.state == RequestState::Open)
            .map(|r| (r.request_id, r.opened_at))
            .collect();
        for (id, opened_at) in open {
            let _ = s.registry.tally(id, opened_at + window + 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::governance::{GovernanceConfig, Quorum};
    use crate::netsim::{inject_adversary, NodeSpec, Rate, ScheduledRedaction};

    fn redaction(at: u64, block: u64, tx_index: usize) -> ScheduledRedaction {
        ScheduledRedaction {
            at_height: at,
            block,
            tx_index,
            new_payload: format!("redacted {block}/{tx_index}"),
            proposer: None,
            reject_voters: vec![],
        }
    }

    fn central(nodes: usize, blocks: u64) -> SimConfig {
        let mut cfg = SimConfig::honest(nodes, 11, blocks);
        cfg.redactions = vec![redaction(6, 2, 0), redaction(9, 4, 2)];
        cfg
    }

    #[test]
    fn single_node_single_block() {
        let report = run_simulation(&SimConfig::honest(1, 3, 1)).unwrap();
        assert_eq!(report.nodes.len(), 1);
        assert_eq!(report.nodes[0].height, 1);
        assert!(report.converged() && report.safe());
    }

    #[test]
    fn central_redactions_converge() {
        let report = run_simulation(&central(4, 12)).unwrap();
        assert!(report.converged(), "{}", report.render_text());
        assert!(report.safe());
        assert!(report.rejections.is_empty());
        assert!(report.redactions.iter().all(|r| r.state == "Executed"));
        let digest = report.nodes[0].chain_digest;
        assert!(report
            .nodes
            .iter()
            .all(|n| n.chain_digest == digest && n.height == 12));
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run_simulation(&central(3, 10)).unwrap();
        let b = run_simulation(&central(3, 10)).unwrap();
        assert_eq!(a.to_json_lines(), b.to_json_lines());
        assert_eq!(a.render_text(), b.render_text());
        let mut other = central(3, 10);
        other.seed = 12;
        assert_ne!(
            run_simulation(&other).unwrap().to_json_lines(),
            a.to_json_lines()
        );
    }

    fn public_trapdoor(reject: Vec<&str>) -> SimConfig {
        let mut cfg = SimConfig::honest(1, 5, 10);
        let voters: Vec<NodeId> = (1..=4).map(|k| NodeId::new(format!("v{k}"))).collect();
        cfg.nodes.extend(
            voters
                .iter()
                .map(|v| NodeSpec::new(v.0.clone(), Role::Voter)),
        );
        cfg.governance = GovernanceConfig::public_trapdoor(voters, Quorum::default(), 5);
        let mut r = redaction(5, 3, 1);
        r.reject_voters = reject.into_iter().map(NodeId::new).collect();
        cfg.redactions = vec![r];
        cfg
    }

    #[test]
    fn public_trapdoor_vote_passes() {
        let report = run_simulation(&public_trapdoor(vec!["v4"])).unwrap();
        assert_eq!(report.redactions[0].state, "Executed");
        assert!(report.converged() && report.safe());
    }

    #[test]
    fn public_trapdoor_tie_rejects() {
        let report = run_simulation(&public_trapdoor(vec!["v3", "v4"])).unwrap();
        assert_eq!(report.redactions[0].state, "Rejected");
        assert!(report.converged() && report.safe());
    }

    fn consortium(withhold: Vec<&str>) -> SimConfig {
        let mut cfg = SimConfig::honest(1, 8, 8);
        cfg.nodes
            .extend((1..=5).map(|k| NodeSpec::new(format!("h{k}"), Role::Voter)));
        cfg.governance = GovernanceConfig::consortium(3, 5);
        let mut r = redaction(4, 2, 2);
        r.reject_voters = withhold.into_iter().map(NodeId::new).collect();
        cfg.redactions = vec![r];
        cfg
    }

    #[test]
    fn consortium_needs_threshold_shares() {
        let ok = run_simulation(&consortium(vec!["h1", "h2"])).unwrap();
        assert_eq!(ok.redactions[0].state, "Executed");
        assert!(ok.converged() && ok.safe());

        let short = run_simulation(&consortium(vec!["h1", "h2", "h3"])).unwrap();
        assert_eq!(short.redactions[0].state, "Approved");
        assert_eq!(
            short.redactions[0].note.as_deref(),
            Some("2 of 3 shares received")
        );
        assert!(short.converged() && short.safe());
    }

    #[test]
    fn forgeries_are_rejected_everywhere() {
        let cfg = inject_adversary(&central(4, 21), "forge_redaction_without_key").unwrap();
        let report = run_simulation(&cfg).unwrap();
        // blocks 1, 11, 21 are attacked; every honest node rejects each forgery
        assert_eq!(report.adversary_rejections(), 3 * 4);
        assert!(report
            .rejections
            .iter()
            .all(|r| r.reason == "chameleon verification failed"));
        assert!(report.safe() && report.converged());
    }

    #[test]
    fn replays_are_stale() {
        let cfg = inject_adversary(&central(4, 12), "replay-old-version").unwrap();
        let mut sim = Simulation::new(cfg).unwrap();
        let report = sim.run();
        assert_eq!(report.adversary_rejections(), 2 * 4);
        assert!(report
            .rejections
            .iter()
            .all(|r| r.reason == "stale version 1 <= recorded 2"));
        assert!(report.safe() && report.converged());
        for node in sim.nodes().iter().filter(|n| n.is_honest()) {
            for r in &report.redactions {
                assert_eq!(node.accepted_version(&r.tx_id.unwrap()), Some(2));
            }
        }
    }

    #[test]
    fn targeted_drop_diverges_at_the_redacted_tx() {
        let mut cfg = central(4, 12);
        cfg.redactions.truncate(1);
        cfg.fault = FaultModel::Drop {
            rate: Rate::always(),
            target: Some(NodeId::new("n2")),
            message: Some(MessageKind::RedactionExecuted),
        };
        let mut sim = Simulation::new(cfg).unwrap();
        let report = sim.run();
        assert!(report.safe());
        let div = &report.divergence.divergent;
        assert_eq!(div.len(), 1);
        assert_eq!(div[0].node, NodeId::new("n2"));
        assert_eq!(div[0].height, Some(2));
        assert_eq!(div[0].tx_id, report.redactions[0].tx_id);
        assert_eq!(div[0].missed_requests, vec![RequestId(1)]);
        assert_eq!(div[0].dropped_executed, vec![RequestId(1)]);

        sim.resync(&NodeId::new("n2")).unwrap();
        assert!(sim.divergence().converged());
    }

    #[test]
    fn gaps_trigger_resync() {
        let mut cfg = central(3, 10);
        cfg.fault = FaultModel::Drop {
            rate: Rate::always(),
            target: Some(NodeId::new("n1")),
            message: Some(MessageKind::NewBlock),
        };
        let report = run_simulation(&cfg).unwrap();
        // n1 sees no blocks, so each redaction notice forces a full copy
        assert_eq!(report.resyncs.len(), 2);
        assert_eq!(report.resyncs[0].node, NodeId::new("n1"));
        assert!(report.safe(), "{}", report.render_text());
    }
}
