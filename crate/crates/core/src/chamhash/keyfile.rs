//! Text key files: one `name=value` line per field, integers in canonical hex.
//!
//! ```text
//! format=redchain-key/1
//! kind=secret
//! p=...
//! q=...
//! g=...
//! y=...
//! x=...
//! ```
//!
//! Lines starting with `#` are comments. Public files stop after `y`.

use std::fmt::Write as _;

use num_bigint::BigUint;
use thiserror::Error;

use super::{ChamError, ChameleonKeyPair, GroupParams, PublicKey, Trapdoor};
use crate::codec::{biguint_from_hex, biguint_to_hex};

const FORMAT_LINE: &str = "format=redchain-key/1";

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Invalid(#[from] ChamError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyFile {
    Public(PublicKey),
    Secret(ChameleonKeyPair),
}

impl KeyFile {
    pub fn public(&self) -> &PublicKey {
        match self {
            KeyFile::Public(pk) => pk,
            KeyFile::Secret(kp) => &kp.public,
        }
    }

    pub fn render(&self) -> String {
        let pk = self.public();
        let mut out = String::new();
        if pk.params.is_insecure() {
            out.push_str("# WARNING: insecure desk-scale parameters, for testing only\n");
        }
        out.push_str(FORMAT_LINE);
        out.push('\n');
        let kind = if matches!(self, KeyFile::Secret(_)) {
            "secret"
        } else {
            "public"
        };
        let _ = writeln!(out, "kind={kind}");
        for (name, v) in [
            ("p", &pk.params.p),
            ("q", &pk.params.q),
            ("g", &pk.params.g),
            ("y", &pk.y),
        ] {
            let _ = writeln!(out, "{name}={}", biguint_to_hex(v));
        }
        if let KeyFile::Secret(kp) = self {
            let _ = writeln!(out, "x={}", biguint_to_hex(&kp.trapdoor.0));
        }
        out
    }

    /// Parses and fully validates a key file.
    pub fn parse(text: &str) -> Result<Self, KeyFileError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.starts_with('#') && !l.is_empty());

        let mut expect = |name: &str| -> Result<(usize, String), KeyFileError> {
            let (line, raw) = lines.next().ok_or(KeyFileError::Parse {
                line: 0,
                msg: format!("missing field {name}"),
            })?;
            let (k, v) = raw.split_once('=').ok_or(KeyFileError::Parse {
                line,
                msg: "expected name=value".into(),
            })?;
            if k != name {
                return Err(KeyFileError::Parse {
                    line,
                    msg: format!("expected field {name}, found {k}"),
                });
            }
            Ok((line, v.to_string()))
        };
        let int = |(line, v): (usize, String)| -> Result<BigUint, KeyFileError> {
            biguint_from_hex(&v).map_err(|msg| KeyFileError::Parse { line, msg })
        };

        let (line, format) = expect("format")?;
        if format!("format={format}") != FORMAT_LINE {
            return Err(KeyFileError::Parse {
                line,
                msg: format!("unsupported format {format}"),
            });
        }
        let (line, kind) = expect("kind")?;
        let secret = match kind.as_str() {
            "public" => false,
            "secret" => true,
            other => {
                return Err(KeyFileError::Parse {
                    line,
                    msg: format!("unknown kind {other}"),
                })
            }
        };
        let p = int(expect("p")?)?;
        let q = int(expect("q")?)?;
        let g = int(expect("g")?)?;
        let y = int(expect("y")?)?;
        let params = GroupParams { p, q, g };
        let key = if secret {
            let x = int(expect("x")?)?;
            let kp = ChameleonKeyPair {
                public: PublicKey { params, y },
                trapdoor: Trapdoor(x),
            };
            kp.validate()?;
            KeyFile::Secret(kp)
        } else {
            let pk = PublicKey { params, y };
            pk.validate()?;
            KeyFile::Public(pk)
        };
        if let Some((line, _)) = lines.next() {
            return Err(KeyFileError::Parse {
                line,
                msg: "trailing content".into(),
            });
        }
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_secret_and_public() {
        let kp = ChameleonKeyPair::generate_seeded(64, 9).unwrap();
        let secret = KeyFile::Secret(kp.clone());
        let text = secret.render();
        assert!(text.starts_with("# WARNING"));
        assert_eq!(KeyFile::parse(&text).unwrap(), secret);
        let public = KeyFile::Public(kp.public);
        assert_eq!(KeyFile::parse(&public.render()).unwrap(), public);
    }

    #[test]
    fn tampered_secret_is_rejected() {
        let kp = ChameleonKeyPair::generate_seeded(64, 9).unwrap();
        let text = KeyFile::Secret(kp.clone()).render();
        let x = biguint_to_hex(&kp.trapdoor.0);
        let bad = text.replace(
            &format!("x={x}"),
            &format!("x={}", biguint_to_hex(&(&kp.trapdoor.0 + 1u32))),
        );
        assert!(matches!(
            KeyFile::parse(&bad),
            Err(KeyFileError::Invalid(_))
        ));
    }

    #[test]
    fn field_order_is_enforced() {
        let text = "format=redchain-key/1\nkind=public\nq=b\np=17\ng=2\ny=8\n";
        match KeyFile::parse(text) {
            Err(KeyFileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toy_public_file_parses() {
        let text = "format=redchain-key/1\nkind=public\np=17\nq=b\ng=2\ny=8\n";
        let key = KeyFile::parse(text).unwrap();
        assert_eq!(key.public().y, BigUint::from(8u32));
    }
}
