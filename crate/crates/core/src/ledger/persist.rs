//! Line-oriented chain file.
//!
//! The first line is a header object carrying the format tag and the chain's
//! public key. Every following line is one JSON object tagged `block`, `tx` or
//! `stamp`. A block line announces how many `tx` and `stamp` lines follow it.
//! Field order is fixed and binary fields are lowercase hex, so
//! `Chain::from_text(s)?.to_text() == s` for any file this module wrote.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Block, BlockHeader, Chain, Digest32, RedactionStamp, Transaction};
use crate::chamhash::PublicKey;

pub const FORMAT_TAG: &str = "redchain-ledger/1";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    #[serde(flatten)]
    key: PublicKey,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockLine {
    height: u64,
    prev_hash: Digest32,
    merkle_root: Digest32,
    timestamp: u64,
    txs: usize,
    stamps: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Block(BlockLine),
    Tx(Transaction),
    Stamp(RedactionStamp),
}

impl Chain {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |v: String| {
            out.push_str(&v);
            out.push('\n');
        };
        let header = HeaderLine {
            format: FORMAT_TAG.into(),
            key: self.key.clone(),
        };
        push(serde_json::to_string(&header).expect("serializable"));
        for block in &self.blocks {
            let h = &block.header;
            let line = Record::Block(BlockLine {
                height: h.height,
                prev_hash: h.prev_hash,
                merkle_root: h.merkle_root,
                timestamp: h.timestamp,
                txs: block.txs.len(),
                stamps: h.redaction_meta.len(),
            });
            push(serde_json::to_string(&line).expect("serializable"));
            for tx in &block.txs {
                push(serde_json::to_string(&Record::Tx(tx.clone())).expect("serializable"));
            }
            for stamp in &h.redaction_meta {
                push(serde_json::to_string(&Record::Stamp(stamp.clone())).expect("serializable"));
            }
        }
        out
    }

    /// Parses a chain file. Structure and encodings are checked here; chain
    /// semantics (hashes, chameleon verification) are left to [`Chain::validate`]
    /// so that a tampered file still loads and reports where it breaks.
    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (line, first) = lines.next().ok_or(ParseError {
            line: 1,
            msg: "empty file".into(),
        })?;
        let header: HeaderLine = serde_json::from_str(first).map_err(|e| ParseError {
            line,
            msg: e.to_string(),
        })?;
        if header.format != FORMAT_TAG {
            return Err(ParseError {
                line,
                msg: format!("unsupported format {:?}", header.format),
            });
        }
        header.key.validate().map_err(|e| ParseError {
            line,
            msg: e.to_string(),
        })?;

        let mut next_record = |what: &str| -> Result<(usize, Record), ParseError> {
            let (line, raw) = lines.next().ok_or(ParseError {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })?;
            let rec = serde_json::from_str(raw).map_err(|e| ParseError {
                line,
                msg: e.to_string(),
            })?;
            Ok((line, rec))
        };

        let mut blocks = Vec::new();
        loop {
            let (line, rec) = match next_record("block") {
                Ok(r) => r,
                Err(e) if e.line == 0 && !blocks.is_empty() => break,
                Err(e) => return Err(e),
            };
            let Record::Block(b) = rec else {
                return Err(ParseError {
                    line,
                    msg: "expected a block record".into(),
                });
            };
            let mut txs = Vec::with_capacity(b.txs);
            for _ in 0..b.txs {
                match next_record("tx")? {
                    (_, Record::Tx(tx)) => txs.push(tx),
                    (line, _) => {
                        return Err(ParseError {
                            line,
                            msg: "expected a tx record".into(),
                        })
                    }
                }
            }
            let mut stamps = Vec::with_capacity(b.stamps);
            for _ in 0..b.stamps {
                match next_record("stamp")? {
                    (_, Record::Stamp(s)) => stamps.push(s),
                    (line, _) => {
                        return Err(ParseError {
                            line,
                            msg: "expected a stamp record".into(),
                        })
                    }
                }
            }
            blocks.push(Block {
                header: BlockHeader {
                    height: b.height,
                    prev_hash: b.prev_hash,
                    merkle_root: b.merkle_root,
                    timestamp: b.timestamp,
                    redaction_meta: stamps,
                },
                txs,
            });
        }
        Ok(Chain::from_parts(header.key, blocks))
    }

    /// SHA-256 of the serialized chain.
    pub fn digest(&self) -> Digest32 {
        Digest32::of(self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamhash::ChameleonKeyPair;
    use crate::ledger::RequestId;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn build(blocks: usize, per_block: usize, redactions: usize, seed: u64) -> Chain {
        let kp = ChameleonKeyPair::generate_seeded(64, 21).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut chain = Chain::new(kp.public.clone());
        for b in 0..blocks {
            let txs = (0..per_block)
                .map(|i| {
                    chain
                        .create_transaction(format!("{b}/{i}").as_bytes(), &mut rng)
                        .unwrap()
                })
                .collect();
            chain.seal_block(txs, b as u64).unwrap();
        }
        for i in 0..redactions.min(blocks) {
            let tx = chain.block(i as u64 + 1).unwrap().txs[0].tx_id;
            chain
                .redact_transaction(
                    &kp.trapdoor,
                    i as u64 + 1,
                    &tx,
                    b"gone",
                    RequestId(i as u64),
                )
                .unwrap();
        }
        chain
    }

    #[test]
    fn genesis_only_round_trip() {
        let chain = build(0, 0, 0, 1);
        let text = chain.to_text();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(Chain::from_text(&text).unwrap(), chain);
    }

    #[test]
    fn record_shapes() {
        let chain = build(1, 1, 1, 1);
        let text = chain.to_text();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with(r#"{"format":"redchain-ledger/1","p":""#));
        assert!(lines[1].starts_with(r#"{"type":"block","height":0,"#));
        assert!(lines[3].starts_with(r#"{"type":"tx","tx_id":""#));
        assert!(lines[4].starts_with(r#"{"type":"stamp","tx_id":""#));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = build(2, 2, 0, 1).to_text();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[4] = lines[4].replace("\"version\":1", "\"version\":\"x\"");
        let err = Chain::from_text(&lines.join("\n")).unwrap_err();
        assert_eq!(err.line, 5);

        let truncated: Vec<_> = text.lines().take(4).collect();
        assert!(Chain::from_text(&truncated.join("\n")).is_err());

        let unknown = text.replacen("\"type\":\"tx\",", "\"type\":\"tx\",\"extra\":1,", 1);
        assert!(Chain::from_text(&unknown).is_err());
        let upper = text.replacen("\"prev_hash\":\"00", "\"prev_hash\":\"0A", 1);
        assert!(Chain::from_text(&upper).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn text_round_trip(blocks in 0usize..5, per_block in 1usize..4, redactions in 0usize..3, seed in any::<u64>()) {
            let chain = build(blocks, per_block, redactions, seed);
            let text = chain.to_text();
            let parsed = Chain::from_text(&text).unwrap();
            prop_assert_eq!(&parsed, &chain);
            prop_assert_eq!(parsed.to_text(), text);
            prop_assert!(parsed.validate().is_valid());
        }
    }
}
