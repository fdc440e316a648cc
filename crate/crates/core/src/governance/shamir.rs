//! Shamir sharing of the trapdoor over `Z_q`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;

use super::GovernanceError;
use crate::chamhash::{mod_inverse, sample_below};
use crate::codec::{biguint_from_hex, biguint_to_hex};

/// Evaluation of the sharing polynomial at `index`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrapdoorShare {
    pub index: u64,
    pub value: BigUint,
}

/// Splits `secret` into `n` shares, any `t` of which reconstruct it.
pub fn split_trapdoor<R: RngCore + ?Sized>(
    secret: &BigUint,
    t: usize,
    n: usize,
    q: &BigUint,
    rng: &mut R,
) -> Result<Vec<TrapdoorShare>, GovernanceError> {
    if t == 0 || t > n {
        return Err(GovernanceError::Params(format!(
            "threshold {t} must satisfy 1 <= t <= n = {n}"
        )));
    }
    if &BigUint::from(n) >= q {
        return Err(GovernanceError::Params(
            "share count must be below the group order".into(),
        ));
    }
    // coefficients[0] is the secret; the rest are uniform in Z_q
    let coefficients: Vec<BigUint> = std::iter::once(secret % q)
        .chain((1..t).map(|_| sample_below(q, rng)))
        .collect();
    Ok((1..=n as u64)
        .map(|index| {
            let x = BigUint::from(index);
            let value = coefficients
                .iter()
                .rev()
                .fold(BigUint::zero(), |acc, c| (acc * &x + c) % q);
            TrapdoorShare { index, value }
        })
        .collect())
}

/// Lagrange interpolation at zero. Any set of distinct shares yields *some*
/// value; with fewer than `t` shares it is almost surely not the secret, which
/// callers detect by checking `g^v = y` or via the redaction postcondition.
pub fn reconstruct_trapdoor(
    shares: &[TrapdoorShare],
    q: &BigUint,
) -> Result<BigUint, GovernanceError> {
    if shares.is_empty() {
        return Err(GovernanceError::Params("no shares supplied".into()));
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if s.index == 0 || &BigUint::from(s.index) >= q {
            return Err(GovernanceError::Params(format!(
                "share index {} out of range",
                s.index
            )));
        }
        if !seen.insert(s.index) {
            return Err(GovernanceError::DuplicateShareIndex(s.index));
        }
    }
    let mut acc = BigUint::zero();
    for (i, si) in shares.iter().enumerate() {
        let mut num = BigUint::one();
        let mut den = BigUint::one();
        for (j, sj) in shares.iter().enumerate() {
            if i == j {
                continue;
            }
            // L_i(0) = prod x_j / (x_j - x_i)
            let xj = BigUint::from(sj.index);
            let xi = BigUint::from(si.index);
            num = num * &xj % q;
            den = den * ((&xj + q - &xi) % q) % q;
        }
        let inv = mod_inverse(&den, q)
            .ok_or_else(|| GovernanceError::Params("modulus is not prime".into()))?;
        acc = (acc + &si.value * num % q * inv) % q;
    }
    Ok(acc)
}

/// A share as distributed to one holder, with the modulus it lives in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareFile {
    pub share: TrapdoorShare,
    pub q: BigUint,
}

impl ShareFile {
    pub fn render(&self) -> String {
        let mut out = String::from("format=redchain-share/1\n");
        let _ = writeln!(out, "index={}", self.share.index);
        let _ = writeln!(out, "value={}", biguint_to_hex(&self.share.value));
        let _ = writeln!(out, "q={}", biguint_to_hex(&self.q));
        out
    }

    pub fn parse(text: &str) -> Result<Self, GovernanceError> {
        let bad = |msg: String| GovernanceError::Config(format!("share file: {msg}"));
        let mut fields = text
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut field = |name: &str| -> Result<String, GovernanceError> {
            let line = fields
                .next()
                .ok_or_else(|| bad(format!("missing {name}")))?;
            match line.split_once('=') {
                Some((k, v)) if k == name => Ok(v.to_string()),
                _ => Err(bad(format!("expected {name}, found {line:?}"))),
            }
        };
        if field("format")? != "redchain-share/1" {
            return Err(bad("unsupported format".into()));
        }
        let index = field("index")?
            .parse::<u64>()
            .map_err(|e| bad(e.to_string()))?;
        let value = biguint_from_hex(&field("value")?).map_err(bad)?;
        let q = biguint_from_hex(&field("q")?).map_err(bad)?;
        if value >= q {
            return Err(bad("share value not reduced mod q".into()));
        }
        Ok(Self {
            share: TrapdoorShare { index, value },
            q,
        })
    }
}
