use std::fmt::Write as _;

use serde::Serialize;

use super::{AdversaryBehavior, MessageKind, Role};
use crate::governance::NodeId;
use crate::ledger::{Digest32, RequestId, TxId};

pub const REPORT_FORMAT_TAG: &str = "redchain-simreport/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<AdversaryBehavior>,
    pub height: u64,
    pub chain_digest: Digest32,
    pub valid: bool,
    pub accepted: u64,
    pub rejected: u64,
    pub dropped: u64,
    pub resyncs: u64,
}

impl NodeSummary {
    pub fn honest(&self) -> bool {
        self.role != Role::Adversary
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RedactionOutcome {
    pub request_id: RequestId,
    pub block: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<TxId>,
    /// Final state at the sealer, or `NotOpened` if the proposal never reached it.
    pub state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub executed_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A message an honest node refused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub time: u64,
    pub node: NodeId,
    pub sender: NodeId,
    pub kind: MessageKind,
    pub reason: String,
}

/// A full replica copy from the sealer, with what triggered it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResyncEvent {
    pub time: u64,
    pub node: NodeId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub node: NodeId,
    /// First block that differs from the reference, if any block does.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,
    /// First differing transaction inside that block.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<TxId>,
    /// Redactions present at the reference but not at this node.
    pub missed_requests: Vec<RequestId>,
    /// `RedactionExecuted` deliveries to this node lost to the fault model.
    pub dropped_executed: Vec<RequestId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivergenceReport {
    pub reference: NodeId,
    pub compared: usize,
    pub divergent: Vec<Divergence>,
}

impl DivergenceReport {
    pub fn converged(&self) -> bool {
        self.divergent.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SafetyReport {
    /// Honest replicas that fail full validation.
    pub invalid_replicas: Vec<String>,
    /// Transactions whose accepted version went down at some honest node.
    pub version_regressions: Vec<String>,
    /// Adversary messages an honest node applied.
    pub adversary_acceptances: u64,
}

impl SafetyReport {
    pub fn held(&self) -> bool {
        self.invalid_replicas.is_empty()
            && self.version_regressions.is_empty()
            && self.adversary_acceptances == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimReport {
    pub seed: u64,
    pub ticks: u64,
    pub key_fingerprint: String,
    pub nodes: Vec<NodeSummary>,
    pub redactions: Vec<RedactionOutcome>,
    pub rejections: Vec<Rejection>,
    pub resyncs: Vec<ResyncEvent>,
    pub divergence: DivergenceReport,
    pub safety: SafetyReport,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line<'a> {
    Report {
        format: &'static str,
        seed: u64,
        ticks: u64,
        key_fingerprint: &'a str,
        converged: bool,
        safe: bool,
    },
    Node(&'a NodeSummary),
    Redaction(&'a RedactionOutcome),
    Rejection(&'a Rejection),
    Resync(&'a ResyncEvent),
    Divergence(&'a Divergence),
    Safety(&'a SafetyReport),
}

impl SimReport {
    pub fn converged(&self) -> bool {
        self.divergence.converged()
    }

    pub fn safe(&self) -> bool {
        self.safety.held()
    }

    /// Rejections of messages sent by adversary nodes.
    pub fn adversary_rejections(&self) -> usize {
        let adversaries: Vec<&NodeId> = self
            .nodes
            .iter()
            .filter(|n| !n.honest())
            .map(|n| &n.id)
            .collect();
        self.rejections
            .iter()
            .filter(|r| adversaries.contains(&&r.sender))
            .count()
    }

    /// One JSON object per line, in the same tagged style as the chain file.
    pub fn to_json_lines(&self) -> String {
        let mut lines = vec![Line::Report {
            format: REPORT_FORMAT_TAG,
            seed: self.seed,
            ticks: self.ticks,
            key_fingerprint: &self.key_fingerprint,
            converged: self.converged(),
            safe: self.safe(),
        }];
        lines.extend(self.nodes.iter().map(Line::Node));
        lines.extend(self.redactions.iter().map(Line::Redaction));
        lines.extend(self.rejections.iter().map(Line::Rejection));
        lines.extend(self.resyncs.iter().map(Line::Resync));
        lines.extend(self.divergence.divergent.iter().map(Line::Divergence));
        lines.push(Line::Safety(&self.safety));
        lines
            .iter()
            .map(|l| serde_json::to_string(l).expect("serializable") + "\n")
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "simulation seed={} (0x{:x}) ticks={} key={}",
            self.seed, self.seed, self.ticks, self.key_fingerprint
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>6} {:<18} {:>5} {:>8} {:>8} {:>7} {:>7}",
            "node",
            "role",
            "height",
            "chain digest",
            "valid",
            "accepted",
            "rejected",
            "dropped",
            "resyncs"
        );
        for n in &self.nodes {
            let digest = n.chain_digest.to_string();
            let _ = writeln!(
                out,
                "{:<12} {:<10} {:>6} {:<18} {:>5} {:>8} {:>8} {:>7} {:>7}",
                n.id.0,
                n.role.to_string(),
                n.height,
                &digest[..16],
                if n.valid { "yes" } else { "NO" },
                n.accepted,
                n.rejected,
                n.dropped,
                n.resyncs
            );
        }

        let _ = writeln!(out);
        let _ = writeln!(out, "redactions: {}", self.redactions.len());
        for r in &self.redactions {
            let tx = r.tx_id.map(|t| t.to_string()).unwrap_or_else(|| "?".into());
            let _ = write!(
                out,
                "  #{} block {} tx {} -> {}",
                r.request_id, r.block, tx, r.state
            );
            if let Some(h) = r.executed_at {
                let _ = write!(out, " at height {h}");
            }
            if let Some(note) = &r.note {
                let _ = write!(out, " ({note})");
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "rejected messages: {} ({} from adversaries)",
            self.rejections.len(),
            self.adversary_rejections()
        );
        for r in &self.rejections {
            let _ = writeln!(
                out,
                "  t={} {} <- {} {}: {}",
                r.time, r.node, r.sender, r.kind, r.reason
            );
        }

        if !self.resyncs.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "resyncs: {}", self.resyncs.len());
            for r in &self.resyncs {
                let _ = writeln!(out, "  t={} {}: {}", r.time, r.node, r.reason);
            }
        }

        let _ = writeln!(out);
        if self.converged() {
            let _ = writeln!(
                out,
                "divergence: none ({} honest replicas identical to {})",
                self.divergence.compared, self.divergence.reference
            );
        } else {
            let _ = writeln!(
                out,
                "divergence: WARNING {} of {} honest replicas differ from {}",
                self.divergence.divergent.len(),
                self.divergence.compared,
                self.divergence.reference
            );
            for d in &self.divergence.divergent {
                let at = match (d.height, d.tx_id) {
                    (Some(h), Some(tx)) => format!("block {h} tx {tx}"),
                    (Some(h), None) => format!("block {h}"),
                    _ => "chain length".into(),
                };
                let ids = |v: &[RequestId]| {
                    v.iter()
                        .map(|r| format!("#{r}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                let _ = writeln!(
                    out,
                    "  {} first differs at {}; missed redactions [{}]; dropped RedactionExecuted [{}]",
                    d.node,
                    at,
                    ids(&d.missed_requests),
                    ids(&d.dropped_executed)
                );
            }
        }

        let s = &self.safety;
        if s.held() {
            let _ = writeln!(out, "safety: held");
        } else {
            let _ = writeln!(out, "safety: VIOLATED");
            for r in &s.invalid_replicas {
                let _ = writeln!(out, "  invalid replica: {r}");
            }
            for r in &s.version_regressions {
                let _ = writeln!(out, "  version regression: {r}");
            }
            if s.adversary_acceptances > 0 {
                let _ = writeln!(
                    out,
                    "  adversary messages accepted: {}",
                    s.adversary_acceptances
                );
            }
        }
        out
    }
}
