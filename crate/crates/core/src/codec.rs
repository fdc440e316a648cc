//! Canonical encodings shared by every on-disk and hashed structure.
//!
//! Big integers travel as lowercase big-endian hex with no leading zeros
//! (`0` encodes zero). Binary fields use plain lowercase hex. Hashed
//! structures are built from length-prefixed fields in a fixed order.

use std::io::{self, Write};
use std::path::Path;

use num_bigint::BigUint;
use num_traits::Zero;
use sha2::{Digest as _, Sha256};

/// Canonical hex form of a big integer.
pub fn biguint_to_hex(value: &BigUint) -> String {
    if value.is_zero() {
        return "0".to_string();
    }
    value.to_str_radix(16)
}

/// Parses canonical hex. Uppercase digits, leading zeros and empty strings are rejected
/// so that every value has exactly one textual form.
pub fn biguint_from_hex(text: &str) -> Result<BigUint, String> {
    if text.is_empty() {
        return Err("empty integer".into());
    }
    if !text
        .bytes()
        .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err(format!("non-canonical hex digits in {text:?}"));
    }
    if text.len() > 1 && text.starts_with('0') {
        return Err(format!("leading zero in {text:?}"));
    }
    BigUint::parse_bytes(text.as_bytes(), 16).ok_or_else(|| format!("invalid hex integer {text:?}"))
}

/// Lowercase hex decoding that refuses uppercase input (canonical form only).
pub fn bytes_from_hex(text: &str) -> Result<Vec<u8>, String> {
    if text.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(format!("non-canonical hex {text:?}"));
    }
    hex::decode(text).map_err(|e| e.to_string())
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Builder for length-prefixed encodings: every field is a big-endian `u32`
/// length followed by its bytes.
#[derive(Default)]
pub struct FieldEncoder {
    buf: Vec<u8>,
}

impl FieldEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, field: &[u8]) -> Self {
        let len = u32::try_from(field.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn u64(self, value: u64) -> Self {
        self.bytes(&value.to_be_bytes())
    }

    /// Minimal big-endian bytes; zero encodes as an empty field.
    pub fn biguint(self, value: &BigUint) -> Self {
        if value.is_zero() {
            self.bytes(&[])
        } else {
            self.bytes(&value.to_bytes_be())
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Serde adapters for canonical hex big integers.
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::biguint_to_hex(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        super::biguint_from_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapters for byte strings as lowercase hex.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, T: AsRef<[u8]>>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(value))
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<T, D::Error>
    where
        D: Deserializer<'de>,
        T: TryFrom<Vec<u8>>,
    {
        let text = String::deserialize(d)?;
        let bytes = super::bytes_from_hex(&text).map_err(serde::de::Error::custom)?;
        let len = bytes.len();
        T::try_from(bytes).map_err(|_| serde::de::Error::custom(format!("unexpected length {len}")))
    }
}

/// Writes `path` through a temporary sibling file and an atomic rename.
///
/// If `fill` fails the temporary file is discarded and `path` is untouched.
pub fn write_atomic_with<F>(path: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    write_atomic_with(path, |w| w.write_all(contents))
}
