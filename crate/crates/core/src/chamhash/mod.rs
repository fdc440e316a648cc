//! Discrete-logarithm chameleon hash `h = g^e * y^r mod p`.
//!
//! The hashing key is `y = g^x`; the trapdoor `x` lets its holder compute, for
//! any new message scalar, randomness that reproduces an existing digest.
//! Messages enter the scheme through [`message_scalar`]: SHA-256 reduced mod `q`.
//!
//! This instantiation is only weakly collision resistant: a single published
//! collision reveals the trapdoor (see [`extract_trapdoor`]). Whoever is allowed
//! to redact must therefore be controlled by governance, not by the hash.

mod group;
mod keyfile;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, FieldEncoder};

pub use group::{
    find_safe_prime, is_probable_prime, mod_inverse, random_bits, sample_below, GroupParams,
    MAX_PRIME_CANDIDATES, PRIMALITY_ROUNDS, SUPPORTED_SECURITY_BITS,
};
pub use keyfile::{KeyFile, KeyFileError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChamError {
    #[error("unsupported security level {0} bits (supported: 64, 256, 2048, 3072)")]
    UnsupportedSecurity(u32),
    #[error("parameter generation failed: {0}")]
    Generation(String),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("{what} out of range [0, q)")]
    OutOfRange { what: &'static str },
    #[error("trapdoor missing or zero")]
    Unauthorized,
}

/// Randomness `r` in `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Randomness(#[serde(with = "crate::codec::hex_biguint")] pub BigUint);

/// Chameleon digest `h`, an element of the order-`q` subgroup.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChameleonDigest(#[serde(with = "crate::codec::hex_biguint")] pub BigUint);

/// A message reduced to a scalar in `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MessageScalar(pub BigUint);

/// The secret trapdoor `x`.
#[derive(Clone, PartialEq, Eq)]
pub struct Trapdoor(pub BigUint);

impl std::fmt::Debug for Trapdoor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Trapdoor(..)")
    }
}

impl From<u64> for Randomness {
    fn from(v: u64) -> Self {
        Self(v.into())
    }
}

impl From<u64> for MessageScalar {
    fn from(v: u64) -> Self {
        Self(v.into())
    }
}

impl From<u64> for Trapdoor {
    fn from(v: u64) -> Self {
        Self(v.into())
    }
}

/// Public hashing key `(p, q, g, y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    #[serde(flatten)]
    pub params: GroupParams,
    #[serde(with = "crate::codec::hex_biguint")]
    pub y: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChameleonKeyPair {
    pub public: PublicKey,
    pub trapdoor: Trapdoor,
}

/// SHA-256 of `message`, read big-endian and reduced mod `q`.
pub fn message_scalar(q: &BigUint, message: &[u8]) -> MessageScalar {
    MessageScalar(BigUint::from_bytes_be(&codec::sha256(message)) % q)
}

/// Uniform randomness in `[0, q)`.
pub fn sample_randomness<R: RngCore + ?Sized>(q: &BigUint, rng: &mut R) -> Randomness {
    Randomness(sample_below(q, rng))
}

/// Core collision computation over `Z_q`: `(e_old - e_new) * x^-1 + r_old mod q`.
pub fn adapt_scalar(
    q: &BigUint,
    trapdoor: &Trapdoor,
    e_old: &MessageScalar,
    r_old: &Randomness,
    e_new: &MessageScalar,
) -> Result<Randomness, ChamError> {
    for (what, v) in [
        ("e_old", &e_old.0),
        ("r_old", &r_old.0),
        ("e_new", &e_new.0),
    ] {
        if v >= q {
            return Err(ChamError::OutOfRange { what });
        }
    }
    let x = &trapdoor.0 % q;
    let x_inv = mod_inverse(&x, q).ok_or(ChamError::Unauthorized)?;
    let diff = (&e_old.0 + q - &e_new.0) % q;
    Ok(Randomness((diff * x_inv + &r_old.0) % q))
}

/// Recovers the trapdoor from one collision `h(e1, r1) = h(e2, r2)` with `r1 != r2`:
/// `x = (e1 - e2) / (r2 - r1) mod q`. Returns `None` if the pair is not a usable collision.
pub fn extract_trapdoor(
    key: &PublicKey,
    (e1, r1): (&MessageScalar, &Randomness),
    (e2, r2): (&MessageScalar, &Randomness),
) -> Option<Trapdoor> {
    let q = &key.params.q;
    if r1 == r2
        || !key
            .hash(e1, r1)
            .ok()
            .is_some_and(|h| key.verify(e2, r2, &h))
    {
        return None;
    }
    let num = (&e1.0 + q - &e2.0) % q;
    let den = (&r2.0 + q - &r1.0) % q;
    let x = num * mod_inverse(&den, q)? % q;
    (key.params.g.modpow(&x, &key.params.p) == key.y).then_some(Trapdoor(x))
}

impl PublicKey {
    pub fn validate(&self) -> Result<(), ChamError> {
        self.params.validate()?;
        if !self.params.in_subgroup(&self.y) || self.y.is_one() {
            return Err(ChamError::InvalidKey(
                "y is not a generator of the subgroup".into(),
            ));
        }
        Ok(())
    }

    pub fn q(&self) -> &BigUint {
        &self.params.q
    }

    /// `g^e * y^r mod p`.
    pub fn hash(&self, e: &MessageScalar, r: &Randomness) -> Result<ChameleonDigest, ChamError> {
        let GroupParams { p, q, g } = &self.params;
        if &e.0 >= q {
            return Err(ChamError::OutOfRange { what: "e" });
        }
        if &r.0 >= q {
            return Err(ChamError::OutOfRange { what: "r" });
        }
        Ok(ChameleonDigest(
            g.modpow(&e.0, p) * self.y.modpow(&r.0, p) % p,
        ))
    }

    /// Total: malformed inputs yield `false`.
    pub fn verify(&self, e: &MessageScalar, r: &Randomness, h: &ChameleonDigest) -> bool {
        self.hash(e, r).is_ok_and(|computed| &computed == h)
    }

    /// SHA-256 the message, reduce mod `q`, then chameleon-hash the scalar.
    pub fn layered_hash(
        &self,
        message: &[u8],
        r: &Randomness,
    ) -> Result<(ChameleonDigest, MessageScalar), ChamError> {
        let e = message_scalar(self.q(), message);
        Ok((self.hash(&e, r)?, e))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        FieldEncoder::new()
            .biguint(&self.params.p)
            .biguint(&self.params.q)
            .biguint(&self.params.g)
            .biguint(&self.y)
            .finish()
    }

    /// First 8 bytes of SHA-256 over the canonical encoding, as hex.
    pub fn fingerprint(&self) -> String {
        hex::encode(&codec::sha256(&self.canonical_bytes())[..8])
    }
}

impl ChameleonKeyPair {
    /// Fresh key pair from the operating system's CSPRNG.
    pub fn generate(security_bits: u32) -> Result<Self, ChamError> {
        Self::generate_with(security_bits, &mut rand::rngs::OsRng)
    }

    /// Reproducible key pair for tests and simulations.
    pub fn generate_seeded(security_bits: u32, seed: u64) -> Result<Self, ChamError> {
        Self::generate_with(security_bits, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn generate_with<R: RngCore + CryptoRng>(
        security_bits: u32,
        rng: &mut R,
    ) -> Result<Self, ChamError> {
        let params = GroupParams::for_security_bits(security_bits, rng)?;
        // x uniform in [1, q-1]
        let x = sample_below(&(&params.q - 1u32), rng) + 1u32;
        Ok(Self::from_trapdoor(params, Trapdoor(x)))
    }

    /// Derives `y = g^x` for a given trapdoor. Does not re-validate `params`.
    pub fn from_trapdoor(params: GroupParams, trapdoor: Trapdoor) -> Self {
        let y = params.g.modpow(&trapdoor.0, &params.p);
        Self {
            public: PublicKey { params, y },
            trapdoor,
        }
    }

    /// Checks `y = g^x` and `1 <= x < q` on top of the group invariants.
    pub fn validate(&self) -> Result<(), ChamError> {
        self.public.params.validate()?;
        let x = &self.trapdoor.0;
        if x.is_zero() || x >= &self.public.params.q {
            return Err(ChamError::InvalidKey("trapdoor out of [1, q-1]".into()));
        }
        if self.public.params.g.modpow(x, &self.public.params.p) != self.public.y {
            return Err(ChamError::InvalidKey("y != g^x".into()));
        }
        Ok(())
    }

    pub fn hash(&self, e: &MessageScalar, r: &Randomness) -> Result<ChameleonDigest, ChamError> {
        self.public.hash(e, r)
    }

    pub fn verify(&self, e: &MessageScalar, r: &Randomness, h: &ChameleonDigest) -> bool {
        self.public.verify(e, r, h)
    }

    /// Randomness for `e_new` colliding with `hash(e_old, r_old)`.
    pub fn adapt(
        &self,
        e_old: &MessageScalar,
        r_old: &Randomness,
        e_new: &MessageScalar,
    ) -> Result<Randomness, ChamError> {
        adapt(&self.public, &self.trapdoor, e_old, r_old, e_new)
    }
}

/// Trapdoor collision for an arbitrary (possibly wrong) trapdoor value; callers that
/// must not trust the trapdoor should check the result with [`PublicKey::verify`].
pub fn adapt(
    key: &PublicKey,
    trapdoor: &Trapdoor,
    e_old: &MessageScalar,
    r_old: &Randomness,
    e_new: &MessageScalar,
) -> Result<Randomness, ChamError> {
    if trapdoor.0.is_zero() {
        return Err(ChamError::Unauthorized);
    }
    adapt_scalar(key.q(), trapdoor, e_old, r_old, e_new)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ChameleonKeyPair {
        let params = GroupParams::new(23u32.into(), 11u32.into(), 2u32.into()).unwrap();
        ChameleonKeyPair::from_trapdoor(params, Trapdoor::from(3))
    }

    /// Independent brute force over small integers.
    fn oracle_hash(e: u64, r: u64) -> u64 {
        let (p, g, y) = (23u64, 2u64, 8u64);
        let pow = |b: u64, k: u64| (0..k).fold(1u64, |acc, _| acc * b % p);
        pow(g, e) * pow(y, r) % p
    }

    #[test]
    fn toy_keypair() {
        let kp = toy();
        assert_eq!(kp.public.y, BigUint::from(8u32));
        kp.validate().unwrap();
        kp.public.validate().unwrap();
    }

    #[test]
    fn toy_hash_matches_oracle() {
        let kp = toy();
        assert_eq!(oracle_hash(5, 7), 16);
        for e in 0..11 {
            for r in 0..11 {
                let h = kp.hash(&e.into(), &r.into()).unwrap();
                assert_eq!(h.0, BigUint::from(oracle_hash(e, r)));
                assert!(kp.public.params.in_subgroup(&h.0));
            }
        }
        assert_eq!(kp.hash(&0.into(), &0.into()).unwrap().0, BigUint::one());
    }

    #[test]
    fn hash_rejects_out_of_range() {
        let kp = toy();
        assert_eq!(
            kp.hash(&11.into(), &0.into()),
            Err(ChamError::OutOfRange { what: "e" })
        );
        assert_eq!(
            kp.hash(&0.into(), &11.into()),
            Err(ChamError::OutOfRange { what: "r" })
        );
    }

    #[test]
    fn verify_is_total() {
        let kp = toy();
        let h16 = ChameleonDigest(16u32.into());
        assert!(kp.verify(&5.into(), &7.into(), &h16));
        assert!(!kp.verify(&5.into(), &7.into(), &ChameleonDigest(15u32.into())));
        assert!(!kp.verify(&5.into(), &8.into(), &h16));
        assert!(!kp.verify(&50.into(), &7.into(), &h16));
    }

    #[test]
    fn toy_adapt_matches_brute_force() {
        let kp = toy();
        let brute: Vec<u64> = (0..11).filter(|&r| oracle_hash(9, r) == 16).collect();
        assert_eq!(brute, vec![2]);
        let r_new = kp.adapt(&5.into(), &7.into(), &9.into()).unwrap();
        assert_eq!(r_new, Randomness::from(2));
        assert_eq!(kp.hash(&9.into(), &r_new).unwrap().0, BigUint::from(16u32));
    }

    #[test]
    fn adapt_identity_and_inverse() {
        let kp = toy();
        for e_old in 0..11u64 {
            for r_old in 0..11u64 {
                assert_eq!(
                    kp.adapt(&e_old.into(), &r_old.into(), &e_old.into())
                        .unwrap(),
                    r_old.into()
                );
                for e_new in 0..11u64 {
                    let r_new = kp
                        .adapt(&e_old.into(), &r_old.into(), &e_new.into())
                        .unwrap();
                    let back = kp.adapt(&e_new.into(), &r_new, &e_old.into()).unwrap();
                    assert_eq!(back, r_old.into());
                }
            }
        }
    }

    #[test]
    fn adapt_without_trapdoor_is_unauthorized() {
        let kp = toy();
        let err = adapt(
            &kp.public,
            &Trapdoor::from(0),
            &5.into(),
            &7.into(),
            &9.into(),
        );
        assert_eq!(err, Err(ChamError::Unauthorized));
        // x = q is zero in Z_q
        let err = adapt(
            &kp.public,
            &Trapdoor::from(11),
            &5.into(),
            &7.into(),
            &9.into(),
        );
        assert_eq!(err, Err(ChamError::Unauthorized));
    }

    #[test]
    fn layered_hash_uses_sha256_mod_q() {
        let kp = toy();
        let empty = message_scalar(kp.public.q(), b"");
        let sha_empty = BigUint::parse_bytes(
            b"e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
            16,
        )
        .unwrap();
        assert_eq!(empty.0, &sha_empty % 11u32);
        assert_eq!(empty.0, BigUint::from(9u32));
        // frozen: SHA-256("tx1") mod 11 = 3, 2^3 * 8^7 mod 23 = 4
        let (h, e) = kp.public.layered_hash(b"tx1", &7.into()).unwrap();
        assert_eq!(e.0, BigUint::from(3u32));
        assert_eq!(h.0, BigUint::from(oracle_hash(3, 7)));
        assert_eq!(h.0, BigUint::from(4u32));
    }

    #[test]
    fn seeded_keygen_is_reproducible() {
        let a = ChameleonKeyPair::generate_seeded(64, 42).unwrap();
        let b = ChameleonKeyPair::generate_seeded(64, 42).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.public.params.is_insecure());
        assert!(matches!(
            ChameleonKeyPair::generate_seeded(13, 1),
            Err(ChamError::UnsupportedSecurity(13))
        ));
    }

    #[test]
    fn key_exposure_from_one_collision() {
        let kp = ChameleonKeyPair::generate_seeded(64, 3).unwrap();
        let e1 = message_scalar(kp.public.q(), b"original");
        let e2 = message_scalar(kp.public.q(), b"redacted");
        let r1 = Randomness::from(12345);
        let r2 = kp.adapt(&e1, &r1, &e2).unwrap();
        let x = extract_trapdoor(&kp.public, (&e1, &r1), (&e2, &r2)).unwrap();
        assert_eq!(x, kp.trapdoor);
        // not a collision
        assert!(extract_trapdoor(&kp.public, (&e1, &r1), (&e2, &r1)).is_none());
    }

    #[test]
    fn sample_randomness_small_q() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(sample_randomness(&11u32.into(), &mut rng).0 < BigUint::from(11u32));
            assert!(sample_randomness(&2u32.into(), &mut rng).0 < BigUint::from(2u32));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::sync::OnceLock;

        fn key() -> &'static ChameleonKeyPair {
            static KEY: OnceLock<ChameleonKeyPair> = OnceLock::new();
            KEY.get_or_init(|| ChameleonKeyPair::generate_seeded(64, 99).unwrap())
        }

        proptest! {
            #[test]
            fn adapt_always_collides(
                m1 in proptest::collection::vec(any::<u8>(), 0..64),
                m2 in proptest::collection::vec(any::<u8>(), 0..64),
                seed in any::<u64>(),
            ) {
                let kp = key();
                let q = kp.public.q();
                let r1 = sample_randomness(q, &mut ChaCha20Rng::seed_from_u64(seed));
                let (h, e1) = kp.public.layered_hash(&m1, &r1).unwrap();
                let e2 = message_scalar(q, &m2);
                let r2 = kp.adapt(&e1, &r1, &e2).unwrap();
                prop_assert!(kp.verify(&e2, &r2, &h));
                prop_assert_eq!(r1 == r2, e1 == e2);
            }
        }
    }
}
