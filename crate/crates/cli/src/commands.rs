use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::rngs::StdRng;
use rand::SeedableRng;
use redchain::chamhash::{ChameleonKeyPair, KeyFile};
use redchain::clawfree::{BitMessage, ClawFreePair};
use redchain::codec::{biguint_to_hex, bytes_from_hex};
use redchain::governance::{
    split_trapdoor, AuthorityMaterial, GovernanceConfig, NodeId, OversightCredential,
    RedactionTarget, ShareFile, TrapdoorShare, Vote,
};
use redchain::ledger::{Chain, RequestId, TxId};
use redchain::netsim::{SimConfig, Simulation};

use crate::error::CliError;
use crate::store::{self, ChainLock};
use crate::{
    BlockCommand, ChainCommand, ClawfreeCommand, Command, KeygenArgs, PayloadArgs, RedactCommand,
    SharesCommand, SimCommand, TxCommand, VoteArgs,
};

type CmdResult = Result<ExitCode, CliError>;

/// `17 (0x11)`: decimal for people, hex for diffing.
fn num(v: u64) -> String {
    format!("{v} (0x{v:x})")
}

pub fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Keygen(args) => keygen(args),
        Command::Chain(ChainCommand::Init {
            chain,
            key,
            governance,
            force,
        }) => chain_init(&chain, &key, governance.as_deref(), force),
        Command::Chain(ChainCommand::Verify { chain }) => chain_verify(&chain),
        Command::Tx(TxCommand::Add { chain, payload }) => tx_add(&chain, &payload),
        Command::Block(BlockCommand::Seal { chain, timestamp }) => block_seal(&chain, timestamp),
        Command::Redact(cmd) => redact(cmd),
        Command::Shares(SharesCommand::Split {
            threshold,
            count,
            out_dir,
            force,
        }) => shares_split(threshold, count, &out_dir, force),
        Command::Clawfree(ClawfreeCommand::Demo {
            bits,
            k,
            seed,
            message,
            new_message,
        }) => clawfree_demo(bits, k, seed, message, new_message),
        Command::Sim(SimCommand::Run { config, out }) => sim_run(&config, out.as_deref()),
    }
}

fn keygen(args: KeygenArgs) -> CmdResult {
    let public_path = store::sidecar(&args.out, ".pub");
    let secret_path = store::sidecar(&args.out, ".key");
    store::refuse_overwrite(&[&public_path, &secret_path], args.force)?;
    let pair = match args.seed {
        Some(seed) => ChameleonKeyPair::generate_seeded(args.bits, seed),
        None => ChameleonKeyPair::generate(args.bits),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let fingerprint = pair.public.fingerprint();
    store::write(&public_path, &KeyFile::Public(pair.public.clone()).render())?;
    store::write_secret(&secret_path, &KeyFile::Secret(pair.clone()).render())?;

    println!("public key: {}", public_path.display());
    println!("secret key: {}", secret_path.display());
    println!("fingerprint: {fingerprint}");
    if pair.public.params.is_insecure() {
        eprintln!("warning: {}-bit parameters are for testing only", args.bits);
    }
    Ok(ExitCode::SUCCESS)
}

fn chain_init(chain: &Path, key: &Path, governance: Option<&Path>, force: bool) -> CmdResult {
    let gov_path = store::sidecar(chain, ".governance.toml");
    let requests = store::sidecar(chain, ".requests");
    let pending = store::sidecar(chain, ".pending");
    store::refuse_overwrite(&[chain, &gov_path, &requests, &pending], force)?;
    let public = store::load_key(key)?.public().clone();
    let config = match governance {
        Some(p) => GovernanceConfig::from_toml(&store::read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => GovernanceConfig::central(),
    };

    let _lock = ChainLock::acquire(chain)?;
    let new = Chain::new(public);
    store::save_chain(chain, &new)?;
    store::write(&gov_path, &config.to_toml())?;
    for stale in [&requests, &pending] {
        if stale.exists() {
            std::fs::remove_file(stale).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    println!(
        "initialized {} (genesis {}, key {}, {} mode)",
        chain.display(),
        new.tip_hash(),
        new.key().fingerprint(),
        config.mode
    );
    Ok(ExitCode::SUCCESS)
}

fn chain_verify(chain_path: &Path) -> CmdResult {
    let chain = store::load_chain(chain_path)?;
    let report = chain.validate();
    match report.failure {
        None => {
            println!(
                "ok: {} blocks, {} transactions, tip {} {}",
                report.blocks_checked,
                report.transactions_checked,
                num(chain.tip_height()),
                chain.tip_hash()
            );
            Ok(ExitCode::SUCCESS)
        }
        Some(f) => Err(CliError::Integrity(format!(
            "{}: verification failed at {f}",
            chain_path.display()
        ))),
    }
}

fn payload_bytes(args: &PayloadArgs) -> Result<Vec<u8>, CliError> {
    match (&args.payload, &args.payload_hex) {
        (Some(text), None) => Ok(text.as_bytes().to_vec()),
        (None, Some(hex)) => bytes_from_hex(hex).map_err(CliError::Usage),
        _ => Err(CliError::Usage(
            "give exactly one of --payload or --payload-hex".into(),
        )),
    }
}

fn parse_tx_id(s: &str) -> Result<TxId, CliError> {
    s.parse()
        .map_err(|e| CliError::Usage(format!("transaction id {s:?}: {e}")))
}

fn tx_add(chain_path: &Path, payload: &PayloadArgs) -> CmdResult {
    let payload = payload_bytes(payload)?;
    let _lock = ChainLock::acquire(chain_path)?;
    let chain = store::load_chain(chain_path)?;
    let mut pending = store::load_pending(chain_path)?;
    let tx = chain.create_transaction(&payload, &mut rand::thread_rng())?;
    pending.push(tx.clone());
    store::save_pending(chain_path, &pending)?;
    println!(
        "tx {} digest {} ({} pending)",
        tx.tx_id,
        biguint_to_hex(&tx.ch_digest.0),
        pending.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn block_seal(chain_path: &Path, timestamp: Option<u64>) -> CmdResult {
    let _lock = ChainLock::acquire(chain_path)?;
    let mut chain = store::load_chain(chain_path)?;
    let pending = store::load_pending(chain_path)?;
    if pending.is_empty() {
        return Err(CliError::Usage("no pending transactions to seal".into()));
    }
    let timestamp = timestamp.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let count = pending.len();
    let block = chain.seal_block(pending, timestamp)?;
    let (height, hash, root) = (block.height(), block.block_hash(), block.header.merkle_root);
    store::save_chain(chain_path, &chain)?;
    store::save_pending(chain_path, &[])?;
    println!(
        "sealed block {} with {count} transactions: hash {hash} merkle root {root}",
        num(height)
    );
    Ok(ExitCode::SUCCESS)
}

fn redact(cmd: RedactCommand) -> CmdResult {
    match cmd {
        RedactCommand::Propose {
            chain,
            tx,
            payload,
            proposer,
        } => redact_propose(&chain, &tx, &payload, proposer),
        RedactCommand::Vote {
            chain,
            request,
            voter,
            vote,
        } => redact_vote(&chain, RequestId(request), voter, &vote),
        RedactCommand::Tally { chain, request } => redact_tally(&chain, RequestId(request)),
        RedactCommand::Execute {
            chain,
            request,
            shares,
        } => redact_execute(&chain, RequestId(request), &shares),
        RedactCommand::Veto {
            chain,
            request,
            overseer,
        } => redact_veto(&chain, RequestId(request), overseer),
        RedactCommand::Audit { chain, tx } => redact_audit(&chain, &tx),
        RedactCommand::List { chain } => redact_list(&chain),
    }
}

fn redact_propose(
    chain_path: &Path,
    tx: &str,
    payload: &PayloadArgs,
    proposer: String,
) -> CmdResult {
    let tx_id = parse_tx_id(tx)?;
    let payload = payload_bytes(payload)?;
    let _lock = ChainLock::acquire(chain_path)?;
    let chain = store::load_chain(chain_path)?;
    let mut registry = store::load_registry(chain_path)?;
    let (height, _) = chain.locate(&tx_id).ok_or_else(|| {
        CliError::Usage(format!(
            "transaction {tx_id} is not in {}",
            chain_path.display()
        ))
    })?;
    let target = RedactionTarget {
        block_height: height,
        tx_id,
    };
    let id = registry.open_request(target, payload, NodeId(proposer), chain.tip_height())?;
    store::save_registry(chain_path, &registry)?;
    println!(
        "request {} for tx {tx_id} in block {}: {}",
        num(id.0),
        num(height),
        registry.request(id)?.state
    );
    Ok(ExitCode::SUCCESS)
}

fn redact_vote(chain_path: &Path, id: RequestId, voter: String, vote: &VoteArgs) -> CmdResult {
    let vote = if vote.approve {
        Vote::Approve
    } else {
        Vote::Reject
    };
    let _lock = ChainLock::acquire(chain_path)?;
    let chain = store::load_chain(chain_path)?;
    let mut registry = store::load_registry(chain_path)?;
    registry.cast_vote(id, &NodeId(voter.clone()), vote, chain.tip_height())?;
    store::save_registry(chain_path, &registry)?;
    let req = registry.request(id)?;
    println!(
        "{voter} voted {} on request {}: {} approve / {} reject",
        format!("{vote:?}").to_lowercase(),
        num(id.0),
        req.approvals(),
        req.rejections()
    );
    Ok(ExitCode::SUCCESS)
}

fn redact_tally(chain_path: &Path, id: RequestId) -> CmdResult {
    let chain = store::load_chain(chain_path)?;
    let registry = store::load_registry(chain_path)?;
    let state = registry.peek_tally(id, chain.tip_height())?;
    let req = registry.request(id)?;
    let config = registry.config();
    println!(
        "request {}: {state} ({} approve / {} reject of {} voters, quorum {}, window closes at height {})",
        num(id.0),
        req.approvals(),
        req.rejections(),
        config.voters.len(),
        String::from(config.quorum),
        num(req.opened_at + config.voting_window)
    );
    Ok(ExitCode::SUCCESS)
}

fn read_shares(paths: &[PathBuf], chain: &Chain) -> Result<Vec<TrapdoorShare>, CliError> {
    paths
        .iter()
        .map(|p| {
            let file = ShareFile::parse(&store::read(p)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            if &file.q != chain.key().q() {
                return Err(CliError::Usage(format!(
                    "{}: share belongs to a different group",
                    p.display()
                )));
            }
            Ok(file.share)
        })
        .collect()
}

fn redact_execute(chain_path: &Path, id: RequestId, share_paths: &[PathBuf]) -> CmdResult {
    let _lock = ChainLock::acquire(chain_path)?;
    let mut chain = store::load_chain(chain_path)?;
    let mut registry = store::load_registry(chain_path)?;
    let material = if share_paths.is_empty() {
        let pair = store::secret_key()?;
        if &pair.public != chain.key() {
            return Err(CliError::Unauthorized(format!(
                "secret key {} does not match chain key {}",
                pair.public.fingerprint(),
                chain.key().fingerprint()
            )));
        }
        AuthorityMaterial::Trapdoor(pair.trapdoor)
    } else {
        AuthorityMaterial::Shares(read_shares(share_paths, &chain)?)
    };

    let before = chain.block_hashes();
    let stamp = registry.execute_redaction(id, &mut chain, &material)?;
    let after = chain.block_hashes();
    if before != after {
        return Err(CliError::Integrity(
            "block hashes changed; chain left untouched".into(),
        ));
    }
    store::save_chain(chain_path, &chain)?;
    store::save_registry(chain_path, &registry)?;

    let tx = chain.transaction(&stamp.tx_id).expect("just redacted");
    println!(
        "executed request {}: tx {} now version {}",
        num(id.0),
        stamp.tx_id,
        tx.version
    );
    println!(
        "block hashes before/after: {} blocks, all unchanged; tip {} == {}",
        before.len(),
        before.last().expect("genesis"),
        after.last().expect("genesis")
    );
    Ok(ExitCode::SUCCESS)
}

fn redact_veto(chain_path: &Path, id: RequestId, overseer: String) -> CmdResult {
    let _lock = ChainLock::acquire(chain_path)?;
    let chain = store::load_chain(chain_path)?;
    let mut registry = store::load_registry(chain_path)?;
    let credential = OversightCredential {
        overseer: NodeId(overseer),
    };
    let state = registry.oversight_veto(id, &credential, chain.tip_height())?;
    store::save_registry(chain_path, &registry)?;
    println!("request {}: {state}", num(id.0));
    Ok(ExitCode::SUCCESS)
}

fn redact_audit(chain_path: &Path, tx: &str) -> CmdResult {
    let tx_id = parse_tx_id(tx)?;
    let chain = store::load_chain(chain_path)?;
    let stamps = chain.audit_history(&tx_id)?;
    let tx = chain.transaction(&tx_id).expect("located by audit_history");
    let (height, _) = chain.locate(&tx_id).expect("located by audit_history");
    println!(
        "tx {tx_id} in block {}: version {}, {} redaction(s)",
        num(height),
        tx.version,
        stamps.len()
    );
    for (i, s) in stamps.iter().enumerate() {
        println!(
            "  stamp {}: request {} approved at height {} replaced payload commitment {}",
            i + 1,
            num(s.request_id.0),
            num(s.approved_at),
            s.old_payload_commitment
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn redact_list(chain_path: &Path) -> CmdResult {
    let registry = store::load_registry(chain_path)?;
    println!("{} mode", registry.config().mode);
    for req in registry.requests() {
        println!(
            "request {}: {} tx {} block {} by {} ({} approve / {} reject)",
            num(req.request_id.0),
            req.state,
            req.target.tx_id,
            num(req.target.block_height),
            req.proposer,
            req.approvals(),
            req.rejections()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn shares_split(threshold: usize, count: usize, out_dir: &Path, force: bool) -> CmdResult {
    let pair = store::secret_key()?;
    let q = pair.public.q().clone();
    let shares = split_trapdoor(
        &pair.trapdoor.0,
        threshold,
        count,
        &q,
        &mut rand::thread_rng(),
    )?;
    let paths: Vec<PathBuf> = shares
        .iter()
        .map(|s| out_dir.join(format!("share-{}.txt", s.index)))
        .collect();
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    store::refuse_overwrite(&refs, force)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    for (share, path) in shares.into_iter().zip(&paths) {
        store::write_secret(
            path,
            &ShareFile {
                share,
                q: q.clone(),
            }
            .render(),
        )?;
        println!("{}", path.display());
    }
    println!("any {threshold} of {count} shares reconstruct the trapdoor");
    Ok(ExitCode::SUCCESS)
}

fn clawfree_demo(
    bits: u64,
    k: usize,
    seed: u64,
    message: Option<String>,
    new_message: Option<String>,
) -> CmdResult {
    let usage = |e: redchain::clawfree::ClawFreeError| CliError::Usage(e.to_string());
    let parse = |m: Option<String>, default: &str| -> Result<BitMessage, CliError> {
        match m {
            Some(text) => BitMessage::parse(&text)
                .ok_or_else(|| CliError::Usage(format!("{text:?} is not a bit string"))),
            None => Ok(BitMessage::digest_prefix(default.as_bytes(), k)),
        }
    };
    let (m1, m2) = (parse(message, "original")?, parse(new_message, "redacted")?);
    let pair = ClawFreePair::generate_seeded(bits, k, seed).map_err(usage)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let r1 = pair.sample_domain(&mut rng);
    let h = pair.hash(&m1, &r1).map_err(usage)?;
    let r2 = pair.adapt(&m1, &r1, &m2).map_err(usage)?;
    let h2 = pair.public.hash(&m2, &r2).map_err(usage)?;

    println!("n  = {}", biguint_to_hex(&pair.public.n));
    println!("m  = {m1}  r  = {}", biguint_to_hex(&r1));
    println!("m' = {m2}  r' = {}", biguint_to_hex(&r2));
    println!("h(m, r)   = {}", biguint_to_hex(&h));
    println!("h(m', r') = {}", biguint_to_hex(&h2));
    if h != h2 {
        return Err(CliError::Integrity(
            "adapted randomness does not collide".into(),
        ));
    }
    println!("collision found with the factorization of n");
    Ok(ExitCode::SUCCESS)
}

fn sim_run(config_path: &Path, out: Option<&Path>) -> CmdResult {
    let config = SimConfig::from_toml(&store::read(config_path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let report = Simulation::new(config)?.run();
    let text = report.render_text();
    if let Some(prefix) = out {
        store::write(&store::sidecar(prefix, ".txt"), &text)?;
        store::write(&store::sidecar(prefix, ".jsonl"), &report.to_json_lines())?;
    }
    print!("{text}");
    if !report.converged() {
        eprintln!(
            "warning: {} honest replica(s) diverged from {}",
            report.divergence.divergent.len(),
            report.divergence.reference
        );
    }
    if report.safe() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Integrity("safety invariant violated".into()))
    }
}
