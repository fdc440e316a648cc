//! Redactable ledger toolkit built on chameleon hashes.
//!
//! - [`chamhash`]: discrete-log chameleon hash with trapdoor collisions.
//! - [`clawfree`]: generic construction from a claw-free permutation pair.
//! - [`ledger`]: chameleon-hashed transactions, Merkle trees, blocks and redaction.
//! - [`governance`]: who may redact (central, consortium, public trapdoor with voting).
//! - [`netsim`]: deterministic multi-node simulation of the redaction lifecycle.

pub mod chamhash;
pub mod clawfree;
pub mod codec;
pub mod governance;
pub mod ledger;
pub mod netsim;
