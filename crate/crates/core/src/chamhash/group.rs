//! Prime-order subgroups of safe-prime groups and the number theory behind them.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::ChamError;

/// Miller-Rabin rounds used for every primality decision on group parameters.
pub const PRIMALITY_ROUNDS: usize = 128;

/// Candidate budget for safe-prime search before giving up.
pub const MAX_PRIME_CANDIDATES: usize = 2_000_000;

/// Supported parameter tiers. `64` is desk scale and insecure.
pub const SUPPORTED_SECURITY_BITS: [u32; 4] = [64, 256, 2048, 3072];

// RFC 3526 group 14: 2048-bit MODP safe prime; 2 generates the order-q subgroup.
const MODP_2048: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3be39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf6955817183995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffffff";

// RFC 3526 group 15: 3072-bit MODP safe prime.
const MODP_3072: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3be39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf6955817183995497cea956ae515d2261898fa051015728e5a8aaac42dad33170d04507a33a85521abdf1cba64ecfb850458dbef0a8aea71575d060c7db3970f85a6e1e4c7abf5ae8cdb0933d71e8c94e04a25619dcee3d2261ad2ee6bf12ffa06d98a0864d87602733ec86a64521f2b18177b200cbbe117577a615d6c770988c0bad946e208e24fa074e5ab3143db5bfce0fd108e4b82d120a93ad2caffffffffffffffff";

const SMALL_PRIMES: [u32; 54] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257,
];

/// `p = 2q + 1` with `p`, `q` prime and `g` generating the subgroup of order `q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "crate::codec::hex_biguint")]
    pub p: BigUint,
    #[serde(with = "crate::codec::hex_biguint")]
    pub q: BigUint,
    #[serde(with = "crate::codec::hex_biguint")]
    pub g: BigUint,
}

impl GroupParams {
    /// Builds parameters after checking every group invariant, including
    /// [`PRIMALITY_ROUNDS`]-round primality tests on `p` and `q`.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, ChamError> {
        let params = Self { p, q, g };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ChamError> {
        let one = BigUint::one();
        if self.p != (&self.q << 1usize) + &one {
            return Err(ChamError::InvalidParams("p != 2q + 1".into()));
        }
        if self.g <= one || self.g >= self.p {
            return Err(ChamError::InvalidParams("generator out of range".into()));
        }
        if !self.g.modpow(&self.q, &self.p).is_one() {
            return Err(ChamError::InvalidParams("g does not have order q".into()));
        }
        // Deterministic witnesses keep validation reproducible.
        let mut rng = ChaCha20Rng::seed_from_u64(0x5afe_9e11);
        if !is_probable_prime(&self.q, PRIMALITY_ROUNDS, &mut rng) {
            return Err(ChamError::InvalidParams("q is not prime".into()));
        }
        if !is_probable_prime(&self.p, PRIMALITY_ROUNDS, &mut rng) {
            return Err(ChamError::InvalidParams("p is not prime".into()));
        }
        Ok(())
    }

    /// Parameters for a supported tier. The 64- and 256-bit tiers search for a
    /// fresh safe prime whose subgroup order `q` has exactly that many bits; the
    /// 2048- and 3072-bit tiers use the RFC 3526 MODP groups (modulus of that size).
    pub fn for_security_bits<R: RngCore + CryptoRng>(
        security_bits: u32,
        rng: &mut R,
    ) -> Result<Self, ChamError> {
        match security_bits {
            64 | 256 => {
                let (p, q) = find_safe_prime(security_bits as u64, rng)?;
                let g = find_subgroup_generator(&p);
                Ok(Self { p, q, g })
            }
            2048 => Ok(Self::modp(MODP_2048)),
            3072 => Ok(Self::modp(MODP_3072)),
            other => Err(ChamError::UnsupportedSecurity(other)),
        }
    }

    fn modp(hex: &str) -> Self {
        let p = BigUint::parse_bytes(hex.as_bytes(), 16).expect("constant");
        let q = (&p - 1u32) >> 1usize;
        Self {
            p,
            q,
            g: BigUint::from(2u32),
        }
    }

    pub fn is_insecure(&self) -> bool {
        self.q.bits() < 128
    }

    /// True iff `h` lies in the order-`q` subgroup.
    pub fn in_subgroup(&self, h: &BigUint) -> bool {
        !h.is_zero() && h < &self.p && h.modpow(&self.q, &self.p).is_one()
    }
}

/// The smallest `g >= 2` whose square is not 1; squares of non-trivial units
/// generate the order-`q` subgroup of a safe-prime group.
fn find_subgroup_generator(p: &BigUint) -> BigUint {
    let mut h = BigUint::from(2u32);
    loop {
        let g = (&h * &h) % p;
        if !g.is_one() {
            return g;
        }
        h += 1u32;
    }
}

/// Miller-Rabin with `rounds` random witnesses.
pub fn is_probable_prime<R: RngCore>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter().chain(std::iter::once(&2)) {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let span = n - 3u32; // witnesses drawn from [2, n-2]
    'witness: for _ in 0..rounds {
        let a = sample_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Uniform sample in `[0, bound)` by rejection over the minimal bit width of `bound`.
pub fn sample_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero(), "empty sampling range");
    let bits = bound.bits();
    let nbytes = bits.div_ceil(8) as usize;
    let excess = (nbytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Random integer with exactly `bits` bits.
pub fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 2);
    let nbytes = bits.div_ceil(8) as usize;
    let excess = (nbytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; nbytes];
    rng.fill_bytes(&mut buf);
    buf[0] &= 0xffu8 >> excess;
    buf[0] |= 0x80u8 >> excess;
    BigUint::from_bytes_be(&buf)
}

fn passes_sieve(n: &BigUint) -> bool {
    SMALL_PRIMES.iter().all(|&sp| {
        let sp = BigUint::from(sp);
        n == &sp || !(n % &sp).is_zero()
    })
}

/// Searches for `q` with `q_bits` bits such that `q` and `2q + 1` are both prime.
pub fn find_safe_prime<R: RngCore + ?Sized>(
    q_bits: u64,
    rng: &mut R,
) -> Result<(BigUint, BigUint), ChamError> {
    let mut checker = ChaCha20Rng::from_seed({
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        seed
    });
    for _ in 0..MAX_PRIME_CANDIDATES {
        let mut q = random_bits(q_bits, rng);
        q |= BigUint::one();
        // q = 2 mod 3 is required for 2q + 1 not to be divisible by 3.
        if (&q % 3u32) != BigUint::from(2u32) {
            continue;
        }
        let p: BigUint = (&q << 1usize) + 1u32;
        if !passes_sieve(&q) || !passes_sieve(&p) {
            continue;
        }
        if !is_probable_prime(&q, 1, &mut checker) || !is_probable_prime(&p, 1, &mut checker) {
            continue;
        }
        if is_probable_prime(&q, PRIMALITY_ROUNDS, &mut checker)
            && is_probable_prime(&p, PRIMALITY_ROUNDS, &mut checker)
        {
            return Ok((p, q));
        }
    }
    Err(ChamError::Generation(format!(
        "no {q_bits}-bit safe prime within {MAX_PRIME_CANDIDATES} candidates"
    )))
}

/// Modular inverse of `a` modulo prime `m`.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let a = BigInt::from(a.clone());
    let m_int = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m_int).to_biguint()
}
