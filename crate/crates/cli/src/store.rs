//! Files that make up a chain workspace.
//!
//! Next to `<chain>` live `<chain>.pending` (unsealed transactions, one JSON
//! object per line), `<chain>.requests` (the redaction request registry),
//! `<chain>.governance.toml` and, while a mutating command runs, `<chain>.lock`.

use std::fs::{self, OpenOptions};
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};

use redchain::chamhash::{ChameleonKeyPair, KeyFile};
use redchain::codec::write_atomic;
use redchain::governance::{GovernanceConfig, RequestRegistry};
use redchain::ledger::{Chain, Transaction};

use crate::error::{key_error, parse_error, CliError};

pub const SECRET_KEY_ENV: &str = "REDCHAIN_SECRET_KEY";

pub fn sidecar(chain: &Path, suffix: &str) -> PathBuf {
    let mut name = chain.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::Usage(format!("{}: no such file", path.display())),
        _ => io_err(path, e),
    })
}

/// Atomic replace; the file is either the old or the new content, never partial.
pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes()).map_err(|e| io_err(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o644))
            .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Like [`write`] but leaves the owner-only mode of the temporary file in place.
pub fn write_secret(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn refuse_overwrite(paths: &[&Path], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Usage(format!(
            "{} exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

/// Advisory lock held for the lifetime of a mutating command.
pub struct ChainLock {
    path: PathBuf,
}

impl ChainLock {
    pub fn acquire(chain: &Path) -> Result<Self, CliError> {
        let path = sidecar(chain, ".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "{} is locked by another invocation (remove {} if it is stale)",
                chain.display(),
                path.display()
            ))),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for ChainLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn load_chain(path: &Path) -> Result<Chain, CliError> {
    Chain::from_text(&read(path)?).map_err(|e| parse_error(path, e))
}

pub fn save_chain(path: &Path, chain: &Chain) -> Result<(), CliError> {
    write(path, &chain.to_text())
}

pub fn load_pending(chain: &Path) -> Result<Vec<Transaction>, CliError> {
    let path = sidecar(chain, ".pending");
    if !path.exists() {
        return Ok(Vec::new());
    }
    read(&path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Integrity(format!("{}: line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub fn save_pending(chain: &Path, txs: &[Transaction]) -> Result<(), CliError> {
    let path = sidecar(chain, ".pending");
    if txs.is_empty() {
        return match fs::remove_file(&path) {
            Err(e) if e.kind() != ErrorKind::NotFound => Err(io_err(&path, e)),
            _ => Ok(()),
        };
    }
    let text: String = txs
        .iter()
        .map(|t| serde_json::to_string(t).expect("serializable") + "\n")
        .collect();
    write(&path, &text)
}

pub fn load_governance(chain: &Path) -> Result<GovernanceConfig, CliError> {
    let path = sidecar(chain, ".governance.toml");
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "{} not found; create the chain with `chain init`",
            path.display()
        )));
    }
    GovernanceConfig::from_toml(&read(&path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_registry(chain: &Path) -> Result<RequestRegistry, CliError> {
    let config = load_governance(chain)?;
    let path = sidecar(chain, ".requests");
    if !path.exists() {
        return Ok(RequestRegistry::new(config)?);
    }
    RequestRegistry::from_json(config, &read(&path)?)
        .map_err(|e| CliError::Integrity(format!("{}: {e}", path.display())))
}

pub fn save_registry(chain: &Path, registry: &RequestRegistry) -> Result<(), CliError> {
    write(&sidecar(chain, ".requests"), &registry.to_json())
}

pub fn load_key(path: &Path) -> Result<KeyFile, CliError> {
    KeyFile::parse(&read(path)?).map_err(|e| key_error(path, e))
}

/// The key pair named by the secret-key environment variable.
pub fn secret_key() -> Result<ChameleonKeyPair, CliError> {
    let path = std::env::var_os(SECRET_KEY_ENV)
        .ok_or_else(|| CliError::Unauthorized(format!("{SECRET_KEY_ENV} is not set")))?;
    match load_key(Path::new(&path))? {
        KeyFile::Secret(pair) => Ok(pair),
        KeyFile::Public(_) => Err(CliError::Unauthorized(format!(
            "{} holds a public key, not a trapdoor",
            Path::new(&path).display()
        ))),
    }
}
