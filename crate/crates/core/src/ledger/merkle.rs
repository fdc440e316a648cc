//! Merkle tree over chameleon digests.
//!
//! Leaves are `SHA-256(len || h)` of each digest's canonical big-endian bytes;
//! internal nodes are `SHA-256(left || right)`. An odd node at the end of a
//! level is promoted unchanged to the next level.

use crate::chamhash::ChameleonDigest;
use crate::codec::{sha256, FieldEncoder};

use super::Digest32;

pub fn leaf_hash(h: &ChameleonDigest) -> Digest32 {
    Digest32(sha256(&FieldEncoder::new().biguint(&h.0).finish()))
}

fn node_hash(left: &Digest32, right: &Digest32) -> Digest32 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&left.0);
    buf[32..].copy_from_slice(&right.0);
    Digest32(sha256(&buf))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    /// `levels[0]` holds the leaf hashes, the last level holds the root alone.
    levels: Vec<Vec<Digest32>>,
}

impl MerkleTree {
    pub fn build(leaves: &[ChameleonDigest]) -> Self {
        let mut levels = vec![leaves.iter().map(leaf_hash).collect::<Vec<_>>()];
        while levels.last().is_some_and(|l| l.len() > 1) {
            let next = levels
                .last()
                .unwrap()
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [single] => *single,
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        Self { levels }
    }

    /// All-zero for an empty tree (the genesis block).
    pub fn root(&self) -> Digest32 {
        self.levels
            .last()
            .and_then(|l| l.first())
            .copied()
            .unwrap_or(Digest32::ZERO)
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    /// Sibling path for leaf `index`: `(sibling, sibling_is_left)` per level, skipping promotions.
    pub fn proof(&self, index: usize) -> Option<Vec<(Digest32, bool)>> {
        if index >= self.leaf_count() {
            return None;
        }
        let mut path = Vec::new();
        let mut i = index;
        for level in &self.levels[..self.levels.len() - 1] {
            let sibling = i ^ 1;
            if sibling < level.len() {
                path.push((level[sibling], sibling < i));
            }
            i /= 2;
        }
        Some(path)
    }

    pub fn verify_proof(
        root: &Digest32,
        leaf: &ChameleonDigest,
        path: &[(Digest32, bool)],
    ) -> bool {
        let acc = path.iter().fold(leaf_hash(leaf), |acc, (sib, left)| {
            if *left {
                node_hash(sib, &acc)
            } else {
                node_hash(&acc, sib)
            }
        });
        &acc == root
    }
}

pub fn merkle_root(leaves: &[ChameleonDigest]) -> Digest32 {
    MerkleTree::build(leaves).root()
}
