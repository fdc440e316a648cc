//! Chameleon hash from a claw-free trapdoor permutation pair.
//!
//! The pair is `f0(x) = x^2 mod n` and `f1(x) = 4x^2 mod n` over the quadratic
//! residues of a Blum integer `n = p*q` (`p = q = 3 mod 4`). A `k`-bit message
//! `m[1..k]` hashes a residue `r` as `f_{m[k]}( ... f_{m[1]}(r) ... )`. With the
//! factorization both maps invert (unique residue square roots), so a collision
//! for a new message is found by running the inverses in reverse order.
//!
//! Messages have a fixed length `k` per key, which keeps the encoding suffix-free.
//! Desk-scale only: the discrete-log scheme in [`crate::chamhash`] is the
//! production path.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::chamhash::{
    is_probable_prime, mod_inverse, random_bits, sample_below, MAX_PRIME_CANDIDATES,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClawFreeError {
    #[error("invalid Blum factor: {0}")]
    InvalidFactor(String),
    #[error("bits per prime must be at least 8, got {0}")]
    TooSmall(u64),
    #[error("prime search exhausted")]
    Generation,
    #[error("message has {got} bits, key expects {expected}")]
    Length { expected: usize, got: usize },
    #[error("value is not a quadratic residue modulo n")]
    Domain,
    #[error("trapdoor (factorization) not available")]
    Unauthorized,
    #[error("collision check failed: trapdoor is inconsistent with n")]
    Inconsistent,
}

/// A fixed-length bit string, `bits[0]` being `m[1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMessage {
    pub bits: Vec<bool>,
}

impl BitMessage {
    /// Parses a string of `0`/`1` characters.
    pub fn parse(text: &str) -> Option<Self> {
        text.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|bits| Self { bits })
    }

    /// The `k` low bits of `value`, most significant first.
    pub fn from_u64(value: u64, k: usize) -> Self {
        Self {
            bits: (0..k).rev().map(|i| (value >> i) & 1 == 1).collect(),
        }
    }

    /// The first `k` bits of SHA-256(`data`), for hashing arbitrary payloads.
    pub fn digest_prefix(data: &[u8], k: usize) -> Self {
        assert!(k <= 256);
        let d = crate::codec::sha256(data);
        Self {
            bits: (0..k).map(|i| d[i / 8] >> (7 - i % 8) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl std::fmt::Display for BitMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.bits
            .iter()
            .try_for_each(|&b| f.write_str(if b { "1" } else { "0" }))
    }
}

/// Public half: the Blum integer and the fixed message length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClawFreePublic {
    pub n: BigUint,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClawFreePair {
    pub public: ClawFreePublic,
    factors: Option<(BigUint, BigUint)>,
}

fn is_blum_prime(p: &BigUint) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(0xb1_0b);
    (p % 4u32) == BigUint::from(3u32) && is_probable_prime(p, 64, &mut rng)
}

/// Jacobi symbol `(a / n)` for odd `n`.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    let mut a = a % n;
    let mut n = n.clone();
    let mut sign = 1i8;
    while !a.is_zero() {
        while a.is_even() {
            a >>= 1usize;
            let r = (&n % 8u32).to_u32_digits().first().copied().unwrap_or(0);
            if r == 3 || r == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32) == BigUint::from(3u32) && (&n % 4u32) == BigUint::from(3u32) {
            sign = -sign;
        }
        a %= &n;
    }
    if n.is_one() {
        sign
    } else {
        0
    }
}

impl ClawFreePublic {
    /// `f0(x) = x^2 mod n`.
    pub fn f0(&self, x: &BigUint) -> BigUint {
        x * x % &self.n
    }

    /// `f1(x) = 4x^2 mod n`.
    pub fn f1(&self, x: &BigUint) -> BigUint {
        (x * x * 4u32) % &self.n
    }

    fn apply(&self, bit: bool, x: &BigUint) -> BigUint {
        if bit {
            self.f1(x)
        } else {
            self.f0(x)
        }
    }

    /// Public domain check: a unit with Jacobi symbol +1. This is necessary for
    /// residuosity; full membership needs the factorization.
    pub fn plausibly_in_domain(&self, r: &BigUint) -> bool {
        !r.is_zero() && r < &self.n && r.gcd(&self.n).is_one() && jacobi(r, &self.n) == 1
    }

    fn check_len(&self, m: &BitMessage) -> Result<(), ClawFreeError> {
        if m.len() != self.k {
            return Err(ClawFreeError::Length {
                expected: self.k,
                got: m.len(),
            });
        }
        Ok(())
    }

    /// `f_{m[k]} o ... o f_{m[1]}(r)`: `m[1]` is applied first.
    pub fn hash(&self, m: &BitMessage, r: &BigUint) -> Result<BigUint, ClawFreeError> {
        self.check_len(m)?;
        if !self.plausibly_in_domain(r) {
            return Err(ClawFreeError::Domain);
        }
        Ok(m.bits
            .iter()
            .fold(r.clone(), |acc, &bit| self.apply(bit, &acc)))
    }
}

impl ClawFreePair {
    /// Validates `p`, `q` as distinct primes congruent to 3 mod 4.
    pub fn from_primes(p: BigUint, q: BigUint, k: usize) -> Result<Self, ClawFreeError> {
        for f in [&p, &q] {
            if !is_blum_prime(f) {
                return Err(ClawFreeError::InvalidFactor(format!(
                    "{f} is not a prime = 3 mod 4"
                )));
            }
        }
        if p == q {
            return Err(ClawFreeError::InvalidFactor("factors must differ".into()));
        }
        Ok(Self::from_parts_unchecked(p, q, k))
    }

    /// No validation at all; `n` is taken as `p * q`. Lets tests build a pair
    /// whose stated trapdoor does not match its modulus.
    pub fn from_parts_unchecked(p: BigUint, q: BigUint, k: usize) -> Self {
        let n = &p * &q;
        Self {
            public: ClawFreePublic { n, k },
            factors: Some((p, q)),
        }
    }

    /// Pair with a modulus but a claimed trapdoor `(p, q)` that need not factor it.
    pub fn with_claimed_trapdoor(n: BigUint, p: BigUint, q: BigUint, k: usize) -> Self {
        Self {
            public: ClawFreePublic { n, k },
            factors: Some((p, q)),
        }
    }

    pub fn public_only(public: ClawFreePublic) -> Self {
        Self {
            public,
            factors: None,
        }
    }

    /// Two distinct `bits_per_prime`-bit Blum primes from `rng`.
    pub fn generate<R: RngCore + ?Sized>(
        bits_per_prime: u64,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, ClawFreeError> {
        if bits_per_prime < 8 {
            return Err(ClawFreeError::TooSmall(bits_per_prime));
        }
        let mut next = || -> Result<BigUint, ClawFreeError> {
            for _ in 0..MAX_PRIME_CANDIDATES {
                let c = random_bits(bits_per_prime, rng) | BigUint::from(3u32);
                if is_blum_prime(&c) {
                    return Ok(c);
                }
            }
            Err(ClawFreeError::Generation)
        };
        let p = next()?;
        let mut q = next()?;
        while q == p {
            q = next()?;
        }
        Self::from_primes(p, q, k)
    }

    pub fn generate_seeded(
        bits_per_prime: u64,
        k: usize,
        seed: u64,
    ) -> Result<Self, ClawFreeError> {
        Self::generate(bits_per_prime, k, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn factors(&self) -> Option<(&BigUint, &BigUint)> {
        self.factors.as_ref().map(|(p, q)| (p, q))
    }

    /// Exact membership in the quadratic residues, via Euler's criterion mod each factor.
    pub fn is_residue(&self, r: &BigUint) -> Result<bool, ClawFreeError> {
        let (p, q) = self.factors().ok_or(ClawFreeError::Unauthorized)?;
        if r.is_zero() || r >= &self.public.n || !r.gcd(&self.public.n).is_one() {
            return Ok(false);
        }
        let euler = |f: &BigUint| (r % f).modpow(&((f - 1u32) >> 1usize), f).is_one();
        Ok(euler(p) && euler(q))
    }

    /// Uniform residue: `x^2 mod n` for a uniform unit `x`.
    pub fn sample_domain<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        let n = &self.public.n;
        loop {
            let x = sample_below(n, rng);
            if !x.is_zero() && x.gcd(n).is_one() {
                return x.modpow(&BigUint::from(2u32), n);
            }
        }
    }

    /// The square root of `y` that is itself a residue, via CRT over the factors.
    fn residue_sqrt(&self, y: &BigUint) -> Result<BigUint, ClawFreeError> {
        let (p, q) = self.factors().ok_or(ClawFreeError::Unauthorized)?;
        let n = &self.public.n;
        let root = |f: &BigUint| (y % f).modpow(&((f + 1u32) >> 2usize), f);
        let (rp, rq) = (root(p), root(q));
        let q_inv = mod_inverse(&(q % p), p).ok_or(ClawFreeError::Inconsistent)?;
        // x = rq + q * ((rp - rq) * q^-1 mod p)
        let diff =
            (BigInt::from(rp) - BigInt::from(rq.clone())).mod_floor(&BigInt::from(p.clone()));
        let t = diff.to_biguint().expect("non-negative") * q_inv % p;
        Ok((rq + q * t) % n)
    }

    pub fn f0_inverse(&self, y: &BigUint) -> Result<BigUint, ClawFreeError> {
        self.residue_sqrt(y)
    }

    pub fn f1_inverse(&self, y: &BigUint) -> Result<BigUint, ClawFreeError> {
        let n = &self.public.n;
        let four_inv = mod_inverse(&BigUint::from(4u32), n).ok_or(ClawFreeError::Inconsistent)?;
        self.residue_sqrt(&(y * four_inv % n))
    }

    pub fn hash(&self, m: &BitMessage, r: &BigUint) -> Result<BigUint, ClawFreeError> {
        if self.factors.is_some() && !self.is_residue(r)? {
            return Err(ClawFreeError::Domain);
        }
        self.public.hash(m, r)
    }

    /// Randomness `r_new` with `hash(m_new, r_new) = hash(m_old, r_old)`:
    /// `f_{m_new[1]}^-1 o ... o f_{m_new[k]}^-1` applied to the old digest.
    pub fn adapt(
        &self,
        m_old: &BitMessage,
        r_old: &BigUint,
        m_new: &BitMessage,
    ) -> Result<BigUint, ClawFreeError> {
        if self.factors.is_none() {
            return Err(ClawFreeError::Unauthorized);
        }
        self.public.check_len(m_new)?;
        let h = self.public.hash(m_old, r_old)?;
        let mut acc = h.clone();
        for &bit in m_new.bits.iter().rev() {
            acc = if bit {
                self.f1_inverse(&acc)?
            } else {
                self.f0_inverse(&acc)?
            };
        }
        match self.public.hash(m_new, &acc) {
            Ok(check) if check == h => Ok(acc),
            _ => Err(ClawFreeError::Inconsistent),
        }
    }
}
