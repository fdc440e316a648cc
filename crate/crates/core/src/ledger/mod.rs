//! Chameleon-hashed ledger.
//!
//! Each transaction carries its own randomness `r` and chameleon digest `h`
//! over `SHA-256(payload) mod q`. Merkle trees are built over the digests and
//! block headers are linked with plain SHA-256, so redacting a payload (new
//! payload plus adapted `r`) leaves every Merkle root and block hash intact.
//! Redaction stamps live in the header but outside the hashed encoding.

mod merkle;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chamhash::{
    self, message_scalar, sample_randomness, ChamError, ChameleonDigest, PublicKey, Randomness,
    Trapdoor,
};
use crate::codec::{sha256, FieldEncoder};

pub use merkle::{leaf_hash, merkle_root, MerkleTree};
pub use persist::{ParseError, FORMAT_TAG};

/// Payload size cap.
pub const MAX_PAYLOAD_BYTES: usize = 1 << 20;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Digest32(#[serde(with = "crate::codec::hex_bytes")] pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0; 32]);

    pub fn of(data: &[u8]) -> Self {
        Self(sha256(data))
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({self})")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxId(#[serde(with = "crate::codec::hex_bytes")] pub [u8; 16]);

impl TxId {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        Self(id)
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({self})")
    }
}

impl FromStr for TxId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = crate::codec::bytes_from_hex(s)?;
        Ok(Self(
            bytes
                .try_into()
                .map_err(|_| "tx id must be 16 bytes".to_string())?,
        ))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub tx_id: TxId,
    #[serde(with = "crate::codec::hex_bytes")]
    pub payload: Vec<u8>,
    pub r: Randomness,
    pub ch_digest: ChameleonDigest,
    pub version: u64,
    pub redaction_count: u64,
}

/// Why a transaction fails its own invariants.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TxFault {
    #[error("chameleon verification failed")]
    ChameleonMismatch,
    #[error("version {version} does not equal 1 + redaction_count {redaction_count}")]
    VersionMismatch { version: u64, redaction_count: u64 },
    #[error("payload exceeds {MAX_PAYLOAD_BYTES} bytes")]
    Oversize,
}

impl Transaction {
    /// Fresh version-1 transaction with sampled randomness and a random id.
    pub fn create<R: RngCore + ?Sized>(
        key: &PublicKey,
        payload: &[u8],
        rng: &mut R,
    ) -> Result<Self, LedgerError> {
        let tx_id = TxId::random(rng);
        let r = sample_randomness(key.q(), rng);
        Self::with_randomness(key, tx_id, payload, r)
    }

    pub fn with_randomness(
        key: &PublicKey,
        tx_id: TxId,
        payload: &[u8],
        r: Randomness,
    ) -> Result<Self, LedgerError> {
        if payload.len() > MAX_PAYLOAD_BYTES {
            return Err(LedgerError::PayloadTooLarge { len: payload.len() });
        }
        let (ch_digest, _) = key.layered_hash(payload, &r)?;
        Ok(Self {
            tx_id,
            payload: payload.to_vec(),
            r,
            ch_digest,
            version: 1,
            redaction_count: 0,
        })
    }

    pub fn check(&self, key: &PublicKey) -> Result<(), TxFault> {
        if self.payload.len() > MAX_PAYLOAD_BYTES {
            return Err(TxFault::Oversize);
        }
        if !key.verify(
            &message_scalar(key.q(), &self.payload),
            &self.r,
            &self.ch_digest,
        ) {
            return Err(TxFault::ChameleonMismatch);
        }
        if self.version != self.redaction_count.wrapping_add(1) {
            return Err(TxFault::VersionMismatch {
                version: self.version,
                redaction_count: self.redaction_count,
            });
        }
        Ok(())
    }

    pub fn payload_commitment(&self) -> Digest32 {
        Digest32::of(&self.payload)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedactionStamp {
    pub tx_id: TxId,
    pub old_payload_commitment: Digest32,
    pub request_id: RequestId,
    pub approved_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest32,
    pub merkle_root: Digest32,
    pub timestamp: u64,
    /// Not part of the hashed encoding.
    pub redaction_meta: Vec<RedactionStamp>,
}

impl BlockHeader {
    /// `height || prev_hash || merkle_root || timestamp`, each length-prefixed.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        FieldEncoder::new()
            .u64(self.height)
            .bytes(&self.prev_hash.0)
            .bytes(&self.merkle_root.0)
            .u64(self.timestamp)
            .finish()
    }

    pub fn block_hash(&self) -> Digest32 {
        Digest32::of(&self.canonical_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

impl Block {
    pub fn block_hash(&self) -> Digest32 {
        self.header.block_hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    fn genesis() -> Self {
        Block {
            header: BlockHeader {
                height: 0,
                prev_hash: Digest32::ZERO,
                merkle_root: Digest32::ZERO,
                timestamp: 0,
                redaction_meta: Vec::new(),
            },
            txs: Vec::new(),
        }
    }

    pub fn stamps_for(&self, tx_id: &TxId) -> impl Iterator<Item = &RedactionStamp> {
        let tx_id = *tx_id;
        self.header
            .redaction_meta
            .iter()
            .filter(move |s| s.tx_id == tx_id)
    }
}

/// A redacted transaction as broadcast to replicas: the new state and its stamp.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedactionUpdate {
    pub height: u64,
    pub tx: Transaction,
    pub stamp: RedactionStamp,
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("payload of {len} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte cap")]
    PayloadTooLarge { len: usize },
    #[error("blocks must contain at least one transaction")]
    EmptyBlock,
    #[error("transaction {tx_id} rejected: {fault}")]
    InvalidTransaction { tx_id: TxId, fault: TxFault },
    #[error("transaction {0} already on chain")]
    DuplicateTx(TxId),
    #[error("transaction {tx_id} not found{}", .height.map(|h| format!(" in block {h}")).unwrap_or_default())]
    NotFound { tx_id: TxId, height: Option<u64> },
    #[error("not authorized: {0}")]
    Unauthorized(String),
    #[error("integrity failure for {tx_id}: {reason}")]
    Integrity { tx_id: TxId, reason: String },
    #[error("stale version {offered} for {tx_id}; replica holds version {recorded}")]
    StaleVersion {
        tx_id: TxId,
        offered: u64,
        recorded: u64,
    },
    #[error("block {height} rejected: {reason}")]
    BlockRejected { height: u64, reason: String },
    #[error(transparent)]
    Cham(#[from] ChamError),
}

/// Where and why validation stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationFailure {
    pub height: u64,
    pub tx_id: Option<TxId>,
    pub reason: String,
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.tx_id {
            Some(tx) => write!(f, "block {} tx {}: {}", self.height, tx, self.reason),
            None => write!(f, "block {}: {}", self.height, self.reason),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub blocks_checked: usize,
    pub transactions_checked: usize,
    pub failure: Option<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }
}

/// A single-writer chain replica. Block 0 is the empty genesis block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    key: PublicKey,
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new(key: PublicKey) -> Self {
        Self {
            key,
            blocks: vec![Block::genesis()],
        }
    }

    pub fn key(&self) -> &PublicKey {
        &self.key
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn tip_height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip_hash(&self) -> Digest32 {
        self.blocks.last().expect("genesis").block_hash()
    }

    pub fn block_hashes(&self) -> Vec<Digest32> {
        self.blocks.iter().map(Block::block_hash).collect()
    }

    pub fn transaction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.txs.len()).sum()
    }

    /// `(height, index)` of a transaction.
    pub fn locate(&self, tx_id: &TxId) -> Option<(u64, usize)> {
        self.blocks.iter().find_map(|b| {
            b.txs
                .iter()
                .position(|t| &t.tx_id == tx_id)
                .map(|i| (b.height(), i))
        })
    }

    pub fn transaction(&self, tx_id: &TxId) -> Option<&Transaction> {
        let (h, i) = self.locate(tx_id)?;
        Some(&self.blocks[h as usize].txs[i])
    }

    pub fn create_transaction<R: RngCore + ?Sized>(
        &self,
        payload: &[u8],
        rng: &mut R,
    ) -> Result<Transaction, LedgerError> {
        Transaction::create(&self.key, payload, rng)
    }

    fn check_new_txs(&self, txs: &[Transaction]) -> Result<(), LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBlock);
        }
        let mut seen = BTreeSet::new();
        for tx in txs {
            tx.check(&self.key)
                .map_err(|fault| LedgerError::InvalidTransaction {
                    tx_id: tx.tx_id,
                    fault,
                })?;
            if tx.version != 1 {
                return Err(LedgerError::InvalidTransaction {
                    tx_id: tx.tx_id,
                    fault: TxFault::VersionMismatch {
                        version: tx.version,
                        redaction_count: tx.redaction_count,
                    },
                });
            }
            if !seen.insert(tx.tx_id) || self.locate(&tx.tx_id).is_some() {
                return Err(LedgerError::DuplicateTx(tx.tx_id));
            }
        }
        Ok(())
    }

    /// Seals `txs` into a new block linked to the current tip.
    pub fn seal_block(
        &mut self,
        txs: Vec<Transaction>,
        timestamp: u64,
    ) -> Result<&Block, LedgerError> {
        self.check_new_txs(&txs)?;
        let leaves: Vec<_> = txs.iter().map(|t| t.ch_digest.clone()).collect();
        let header = BlockHeader {
            height: self.tip_height() + 1,
            prev_hash: self.tip_hash(),
            merkle_root: merkle_root(&leaves),
            timestamp,
            redaction_meta: Vec::new(),
        };
        self.blocks.push(Block { header, txs });
        Ok(self.blocks.last().unwrap())
    }

    /// Appends a block received from elsewhere after checking linkage, Merkle root and transactions.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        let height = block.height();
        let reject = |reason: &str| LedgerError::BlockRejected {
            height,
            reason: reason.to_string(),
        };
        if height != self.tip_height() + 1 {
            return Err(reject(&format!(
                "expected height {}",
                self.tip_height() + 1
            )));
        }
        if block.header.prev_hash != self.tip_hash() {
            return Err(reject("prev_hash does not match tip"));
        }
        if !block.header.redaction_meta.is_empty() {
            return Err(reject("new block carries redaction stamps"));
        }
        self.check_new_txs(&block.txs)?;
        let leaves: Vec<_> = block.txs.iter().map(|t| t.ch_digest.clone()).collect();
        if merkle_root(&leaves) != block.header.merkle_root {
            return Err(reject("merkle root mismatch"));
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Replaces a transaction's payload in place using the trapdoor.
    ///
    /// The adapted randomness is checked against the stored digest before any
    /// mutation; a wrong trapdoor yields [`LedgerError::Integrity`] and leaves the
    /// chain untouched. The stamp's `approved_at` is the current tip height.
    pub fn redact_transaction(
        &mut self,
        trapdoor: &Trapdoor,
        block_height: u64,
        tx_id: &TxId,
        new_payload: &[u8],
        request_id: RequestId,
    ) -> Result<RedactionStamp, LedgerError> {
        if new_payload.len() > MAX_PAYLOAD_BYTES {
            return Err(LedgerError::PayloadTooLarge {
                len: new_payload.len(),
            });
        }
        let approved_at = self.tip_height();
        let q = self.key.q().clone();
        let block = self.block(block_height).ok_or(LedgerError::NotFound {
            tx_id: *tx_id,
            height: Some(block_height),
        })?;
        let index =
            block
                .txs
                .iter()
                .position(|t| &t.tx_id == tx_id)
                .ok_or(LedgerError::NotFound {
                    tx_id: *tx_id,
                    height: Some(block_height),
                })?;
        let old = &block.txs[index];

        let e_old = message_scalar(&q, &old.payload);
        let e_new = message_scalar(&q, new_payload);
        let r_new =
            chamhash::adapt(&self.key, trapdoor, &e_old, &old.r, &e_new).map_err(|e| match e {
                ChamError::Unauthorized => LedgerError::Unauthorized(e.to_string()),
                other => LedgerError::Cham(other),
            })?;
        if !self.key.verify(&e_new, &r_new, &old.ch_digest) {
            return Err(LedgerError::Integrity {
                tx_id: *tx_id,
                reason: "adapted randomness does not reproduce the chameleon digest".into(),
            });
        }

        let stamp = RedactionStamp {
            tx_id: *tx_id,
            old_payload_commitment: old.payload_commitment(),
            request_id,
            approved_at,
        };
        let redacted = Transaction {
            tx_id: *tx_id,
            payload: new_payload.to_vec(),
            r: r_new,
            ch_digest: old.ch_digest.clone(),
            version: old.version + 1,
            redaction_count: old.redaction_count + 1,
        };
        let block = &mut self.blocks[block_height as usize];
        block.txs[index] = redacted;
        block.header.redaction_meta.push(stamp.clone());
        Ok(stamp)
    }

    /// The broadcast form of a transaction's latest redaction.
    pub fn redaction_update(&self, tx_id: &TxId) -> Option<RedactionUpdate> {
        let (height, index) = self.locate(tx_id)?;
        let block = &self.blocks[height as usize];
        let stamp = block.stamps_for(tx_id).last()?.clone();
        Some(RedactionUpdate {
            height,
            tx: block.txs[index].clone(),
            stamp,
        })
    }

    /// Applies a redaction performed elsewhere. The new state must verify under
    /// the chain key, keep the digest, advance the version by exactly one and
    /// commit to the payload it replaces. Older or equal versions are refused
    /// as [`LedgerError::StaleVersion`], which blocks replays of pre-redaction data.
    pub fn apply_redaction(&mut self, update: &RedactionUpdate) -> Result<(), LedgerError> {
        let tx_id = update.tx.tx_id;
        let integrity = |reason: &str| LedgerError::Integrity {
            tx_id,
            reason: reason.to_string(),
        };
        let block = self.block(update.height).ok_or(LedgerError::NotFound {
            tx_id,
            height: Some(update.height),
        })?;
        let index =
            block
                .txs
                .iter()
                .position(|t| t.tx_id == tx_id)
                .ok_or(LedgerError::NotFound {
                    tx_id,
                    height: Some(update.height),
                })?;
        let current = &block.txs[index];

        if update.tx.check(&self.key).is_err() {
            return Err(integrity("chameleon verification failed"));
        }
        if update.tx.ch_digest != current.ch_digest {
            return Err(integrity("chameleon digest differs from the sealed one"));
        }
        if update.tx.version <= current.version {
            return Err(LedgerError::StaleVersion {
                tx_id,
                offered: update.tx.version,
                recorded: current.version,
            });
        }
        if update.tx.version != current.version + 1 {
            return Err(integrity("version skips ahead"));
        }
        if update.stamp.tx_id != tx_id
            || update.stamp.old_payload_commitment != current.payload_commitment()
        {
            return Err(integrity("stamp does not commit to the replaced payload"));
        }
        if update.stamp.approved_at < update.height {
            return Err(integrity("stamp predates the block"));
        }
        if update.stamp.approved_at > self.tip_height() {
            return Err(integrity("stamp is later than the local tip"));
        }
        let block = &mut self.blocks[update.height as usize];
        block.txs[index] = update.tx.clone();
        block.header.redaction_meta.push(update.stamp.clone());
        Ok(())
    }

    /// Stamps for a transaction, in execution order.
    pub fn audit_history(&self, tx_id: &TxId) -> Result<Vec<RedactionStamp>, LedgerError> {
        let (height, _) = self.locate(tx_id).ok_or(LedgerError::NotFound {
            tx_id: *tx_id,
            height: None,
        })?;
        Ok(self.blocks[height as usize]
            .stamps_for(tx_id)
            .cloned()
            .collect())
    }

    /// Full check: heights, linkage, transactions, Merkle roots, stamps.
    /// Stops at the first failure.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            blocks_checked: 0,
            transactions_checked: 0,
            failure: None,
        };
        let mut seen = BTreeSet::new();
        let tip = self.tip_height();
        let fail = |height, tx_id, reason: String| {
            Some(ValidationFailure {
                height,
                tx_id,
                reason,
            })
        };

        for (pos, block) in self.blocks.iter().enumerate() {
            let height = pos as u64;
            let h = &block.header;
            report.blocks_checked += 1;
            if h.height != height {
                report.failure = fail(
                    height,
                    None,
                    format!("height field {} out of sequence", h.height),
                );
                return report;
            }
            if pos == 0 {
                if *block != Block::genesis() {
                    report.failure = fail(0, None, "genesis block is not canonical".into());
                    return report;
                }
                continue;
            }
            if h.prev_hash != self.blocks[pos - 1].block_hash() {
                report.failure = fail(
                    height,
                    None,
                    "prev_hash does not match previous block".into(),
                );
                return report;
            }
            if block.txs.is_empty() {
                report.failure = fail(height, None, "empty block".into());
                return report;
            }
            for tx in &block.txs {
                report.transactions_checked += 1;
                if let Err(fault) = tx.check(&self.key) {
                    report.failure = fail(height, Some(tx.tx_id), fault.to_string());
                    return report;
                }
                if !seen.insert(tx.tx_id) {
                    report.failure =
                        fail(height, Some(tx.tx_id), "duplicate transaction id".into());
                    return report;
                }
            }
            let leaves: Vec<_> = block.txs.iter().map(|t| t.ch_digest.clone()).collect();
            if merkle_root(&leaves) != h.merkle_root {
                report.failure = fail(height, None, "merkle root mismatch".into());
                return report;
            }
            let mut counts: BTreeMap<TxId, (u64, u64)> = BTreeMap::new();
            for stamp in &h.redaction_meta {
                if !block.txs.iter().any(|t| t.tx_id == stamp.tx_id) {
                    report.failure = fail(
                        height,
                        Some(stamp.tx_id),
                        "stamp for a transaction not in this block".into(),
                    );
                    return report;
                }
                let entry = counts.entry(stamp.tx_id).or_insert((0, 0));
                if stamp.approved_at < height
                    || stamp.approved_at > tip
                    || stamp.approved_at < entry.1
                {
                    report.failure = fail(
                        height,
                        Some(stamp.tx_id),
                        "stamp height out of order".into(),
                    );
                    return report;
                }
                *entry = (entry.0 + 1, stamp.approved_at);
            }
            for tx in &block.txs {
                let stamps = counts.get(&tx.tx_id).map_or(0, |c| c.0);
                if stamps != tx.redaction_count {
                    report.failure = fail(
                        height,
                        Some(tx.tx_id),
                        format!(
                            "redaction_count {} but {} stamps",
                            tx.redaction_count, stamps
                        ),
                    );
                    return report;
                }
            }
        }
        report
    }

    pub(crate) fn from_parts(key: PublicKey, blocks: Vec<Block>) -> Self {
        Self { key, blocks }
    }

    /// Mutable access for tests and tools that simulate tampering.
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamhash::{ChameleonKeyPair, GroupParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keypair() -> ChameleonKeyPair {
        ChameleonKeyPair::generate_seeded(64, 11).unwrap()
    }

    fn chain_with(blocks: usize, per_block: usize, seed: u64) -> (ChameleonKeyPair, Chain) {
        let kp = keypair();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut chain = Chain::new(kp.public.clone());
        for b in 0..blocks {
            let txs = (0..per_block)
                .map(|i| {
                    chain
                        .create_transaction(format!("b{b} t{i}").as_bytes(), &mut rng)
                        .unwrap()
                })
                .collect();
            chain.seal_block(txs, 1000 + b as u64).unwrap();
        }
        (kp, chain)
    }

    #[test]
    fn transactions_satisfy_invariants() {
        let kp = keypair();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for payload in [&b"a"[..], b""] {
            let tx = Transaction::create(&kp.public, payload, &mut rng).unwrap();
            tx.check(&kp.public).unwrap();
            assert_eq!((tx.version, tx.redaction_count), (1, 0));
        }
        let big = vec![0u8; MAX_PAYLOAD_BYTES + 1];
        assert!(matches!(
            Transaction::create(&kp.public, &big, &mut rng),
            Err(LedgerError::PayloadTooLarge { .. })
        ));
    }

    #[test]
    fn toy_transaction_digest() {
        let params = GroupParams::new(23u32.into(), 11u32.into(), 2u32.into()).unwrap();
        let kp = ChameleonKeyPair::from_trapdoor(params, Trapdoor::from(3));
        // SHA-256("p22") mod 11 = 5 (computed offline)
        assert_eq!(message_scalar(kp.public.q(), b"p22").0, 5u32.into());
        let tx = Transaction::with_randomness(&kp.public, TxId([0; 16]), b"p22", 7.into()).unwrap();
        assert_eq!(tx.ch_digest.0, 16u32.into());
    }

    #[test]
    fn sealing_links_blocks() {
        let (_, chain) = chain_with(2, 1, 3);
        assert_eq!(chain.tip_height(), 2);
        let b1 = chain.block(1).unwrap();
        let b2 = chain.block(2).unwrap();
        assert_eq!(b2.header.prev_hash, b1.block_hash());
        assert_eq!(
            b1.header.merkle_root.0,
            sha256(&FieldEncoder::new().biguint(&b1.txs[0].ch_digest.0).finish())
        );
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn seal_rejects_empty_and_invalid() {
        let (_, mut chain) = chain_with(1, 1, 3);
        assert!(matches!(
            chain.seal_block(vec![], 0),
            Err(LedgerError::EmptyBlock)
        ));
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut bad = chain.create_transaction(b"x", &mut rng).unwrap();
        bad.payload = b"y".to_vec();
        let id = bad.tx_id;
        match chain.seal_block(vec![bad], 0) {
            Err(LedgerError::InvalidTransaction { tx_id, .. }) => assert_eq!(tx_id, id),
            other => panic!("unexpected {other:?}"),
        }
        let dup = chain.block(1).unwrap().txs[0].clone();
        assert!(matches!(
            chain.seal_block(vec![dup], 0),
            Err(LedgerError::DuplicateTx(_))
        ));
    }

    #[test]
    fn redaction_preserves_hashes() {
        let (kp, mut chain) = chain_with(10, 3, 5);
        let before = chain.block_hashes();
        let target = chain.block(5).unwrap().txs[1].clone();
        let stamp = chain
            .redact_transaction(&kp.trapdoor, 5, &target.tx_id, b"redacted", RequestId(1))
            .unwrap();
        assert_eq!(chain.block_hashes(), before);
        assert_eq!(stamp.old_payload_commitment, Digest32::of(&target.payload));
        let after = chain.transaction(&target.tx_id).unwrap();
        assert_eq!(after.payload, b"redacted");
        assert_ne!(after.r, target.r);
        assert_eq!((after.version, after.redaction_count), (2, 1));
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn identity_redaction_keeps_randomness() {
        let (kp, mut chain) = chain_with(1, 1, 5);
        let tx = chain.block(1).unwrap().txs[0].clone();
        chain
            .redact_transaction(
                &kp.trapdoor,
                1,
                &tx.tx_id,
                &tx.payload.clone(),
                RequestId(7),
            )
            .unwrap();
        let after = chain.transaction(&tx.tx_id).unwrap();
        assert_eq!(after.r, tx.r);
        assert_eq!(after.version, 2);
        assert_eq!(chain.audit_history(&tx.tx_id).unwrap().len(), 1);
    }

    #[test]
    fn wrong_trapdoor_is_atomic_integrity_failure() {
        let (kp, mut chain) = chain_with(3, 2, 5);
        let snapshot = chain.clone();
        let tx = chain.block(2).unwrap().txs[0].tx_id;
        let wrong = Trapdoor(&kp.trapdoor.0 + 1u32);
        let err = chain
            .redact_transaction(&wrong, 2, &tx, b"evil", RequestId(1))
            .unwrap_err();
        assert!(matches!(err, LedgerError::Integrity { .. }));
        assert_eq!(chain, snapshot);
        let err = chain
            .redact_transaction(&Trapdoor::from(0), 2, &tx, b"evil", RequestId(1))
            .unwrap_err();
        assert!(matches!(err, LedgerError::Unauthorized(_)));
        assert_eq!(chain, snapshot);
    }

    #[test]
    fn unknown_tx_is_not_found() {
        let (kp, mut chain) = chain_with(2, 1, 5);
        let missing = TxId([9; 16]);
        assert!(matches!(
            chain.redact_transaction(&kp.trapdoor, 1, &missing, b"", RequestId(1)),
            Err(LedgerError::NotFound { .. })
        ));
        assert!(matches!(
            chain.audit_history(&missing),
            Err(LedgerError::NotFound { .. })
        ));
    }

    #[test]
    fn tampering_fails_at_that_transaction() {
        let (_, mut chain) = chain_with(4, 3, 5);
        let target = chain.block(3).unwrap().txs[2].tx_id;
        chain.blocks_mut()[3].txs[2].payload = b"tampered".to_vec();
        let report = chain.validate();
        let failure = report.failure.unwrap();
        assert_eq!((failure.height, failure.tx_id), (3, Some(target)));
    }

    #[test]
    fn audit_trail_is_append_only() {
        let (kp, mut chain) = chain_with(2, 2, 5);
        let tx = chain.block(1).unwrap().txs[0].clone();
        assert!(chain.audit_history(&tx.tx_id).unwrap().is_empty());
        chain
            .redact_transaction(&kp.trapdoor, 1, &tx.tx_id, b"v2", RequestId(1))
            .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let more = vec![chain.create_transaction(b"later", &mut rng).unwrap()];
        chain.seal_block(more, 5000).unwrap();
        chain
            .redact_transaction(&kp.trapdoor, 1, &tx.tx_id, b"v3", RequestId(2))
            .unwrap();
        let stamps = chain.audit_history(&tx.tx_id).unwrap();
        assert_eq!(stamps.len(), 2);
        assert!(stamps[0].approved_at <= stamps[1].approved_at);
        assert_eq!(stamps[0].old_payload_commitment, Digest32::of(&tx.payload));
        assert_eq!(stamps[1].old_payload_commitment, Digest32::of(b"v2"));
        assert_eq!(chain.transaction(&tx.tx_id).unwrap().redaction_count, 2);
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn replicas_apply_updates_and_refuse_replays() {
        let (kp, mut leader) = chain_with(2, 2, 5);
        let mut replica = leader.clone();
        let original = leader.block(2).unwrap().txs[1].clone();
        let replay = RedactionUpdate {
            height: 2,
            tx: original.clone(),
            stamp: RedactionStamp {
                tx_id: original.tx_id,
                old_payload_commitment: original.payload_commitment(),
                request_id: RequestId(1),
                approved_at: 2,
            },
        };
        leader
            .redact_transaction(&kp.trapdoor, 2, &original.tx_id, b"new", RequestId(1))
            .unwrap();
        let update = leader.redaction_update(&original.tx_id).unwrap();

        replica.apply_redaction(&update).unwrap();
        assert_eq!(replica, leader);
        assert!(matches!(
            replica.apply_redaction(&update),
            Err(LedgerError::StaleVersion { .. })
        ));
        assert!(matches!(
            replica.apply_redaction(&replay),
            Err(LedgerError::StaleVersion {
                offered: 1,
                recorded: 2,
                ..
            })
        ));

        let mut forged = update.clone();
        forged.tx.payload = b"forged".to_vec();
        forged.tx.version = 3;
        forged.tx.redaction_count = 2;
        assert!(matches!(
            replica.apply_redaction(&forged),
            Err(LedgerError::Integrity { .. })
        ));
        assert_eq!(replica, leader);
    }

    #[test]
    fn append_block_checks_linkage() {
        let (_, leader) = chain_with(3, 2, 5);
        let mut replica = Chain::new(leader.key().clone());
        for b in &leader.blocks()[1..] {
            replica.append_block(b.clone()).unwrap();
        }
        assert_eq!(replica, leader);
        let mut bogus = leader.block(3).unwrap().clone();
        bogus.header.height = 4;
        assert!(replica.append_block(bogus.clone()).is_err());
        bogus.header.prev_hash = replica.tip_hash();
        bogus.header.merkle_root = Digest32::ZERO;
        assert!(replica.append_block(bogus).is_err());
    }
}
