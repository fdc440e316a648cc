use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_redchain");

struct Workspace {
    dir: TempDir,
    secret: Option<PathBuf>,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
            secret: None,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(BIN);
        cmd.args(args).env_remove("REDCHAIN_SECRET_KEY");
        if let Some(secret) = &self.secret {
            cmd.env("REDCHAIN_SECRET_KEY", secret);
        }
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Key, chain with `blocks` blocks of three transactions, governance file.
    fn chain(&mut self, governance: Option<&str>, blocks: usize) -> Vec<String> {
        self.ok(&[
            "keygen",
            "--bits",
            "64",
            "--seed",
            "7",
            "--out",
            &self.arg("k"),
        ]);
        self.secret = Some(self.path("k.key"));
        let mut init = vec![
            "chain".to_string(),
            "init".into(),
            "--chain".into(),
            self.arg("c.chain"),
            "--key".into(),
            self.arg("k.pub"),
        ];
        if let Some(toml) = governance {
            fs::write(self.path("gov.toml"), toml).unwrap();
            init.extend(["--governance".into(), self.arg("gov.toml")]);
        }
        let init: Vec<&str> = init.iter().map(String::as_str).collect();
        self.ok(&init);
        let mut ids = Vec::new();
        for b in 0..blocks {
            for t in 0..3 {
                let out = self.ok(&[
                    "tx",
                    "add",
                    "--chain",
                    &self.arg("c.chain"),
                    "--payload",
                    &format!("block {b} tx {t}"),
                ]);
                ids.push(out.split_whitespace().nth(1).unwrap().to_string());
            }
            self.ok(&[
                "block",
                "seal",
                "--chain",
                &self.arg("c.chain"),
                "--timestamp",
                &b.to_string(),
            ]);
        }
        ids
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn keygen_is_deterministic_and_guarded() {
    let ws = Workspace::new();
    let a = ws.ok(&[
        "keygen",
        "--bits",
        "64",
        "--seed",
        "42",
        "--out",
        &ws.arg("a"),
    ]);
    ws.ok(&[
        "keygen",
        "--bits",
        "64",
        "--seed",
        "42",
        "--out",
        &ws.arg("b"),
    ]);
    assert!(a.contains("fingerprint: "));
    assert_eq!(
        fs::read(ws.path("a.pub")).unwrap(),
        fs::read(ws.path("b.pub")).unwrap()
    );
    assert_eq!(
        fs::read(ws.path("a.key")).unwrap(),
        fs::read(ws.path("b.key")).unwrap()
    );

    let again = ws.run(&[
        "keygen",
        "--bits",
        "64",
        "--seed",
        "1",
        "--out",
        &ws.arg("a"),
    ]);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("--force"));
    ws.ok(&[
        "keygen",
        "--bits",
        "64",
        "--seed",
        "1",
        "--out",
        &ws.arg("a"),
        "--force",
    ]);
    assert_ne!(
        fs::read(ws.path("a.pub")).unwrap(),
        fs::read(ws.path("b.pub")).unwrap()
    );

    assert_eq!(
        code(&ws.run(&["keygen", "--bits", "13", "--out", &ws.arg("x")])),
        2
    );
    assert!(!ws.path("x.pub").exists());
}

#[test]
fn build_and_verify() {
    let mut genesis = Workspace::new();
    genesis.chain(None, 0);
    let out = genesis.ok(&["chain", "verify", "--chain", &genesis.arg("c.chain")]);
    assert!(out.starts_with("ok: 1 blocks"), "{out}");

    let mut ws = Workspace::new();
    let chain = ws.arg("c.chain");
    ws.chain(None, 1);
    let out = ws.ok(&["chain", "verify", "--chain", &chain]);
    assert!(out.starts_with("ok: 2 blocks, 3 transactions"), "{out}");
    assert!(!ws.path("c.chain.pending").exists());

    let empty = ws.run(&["block", "seal", "--chain", &chain]);
    assert_eq!(code(&empty), 2);
}

#[test]
fn tampered_payload_names_the_transaction() {
    let mut ws = Workspace::new();
    let ids = ws.chain(None, 2);
    let chain = ws.path("c.chain");
    let text = fs::read_to_string(&chain).unwrap();
    // "block 1 tx 1" in hex, first byte flipped from 'b' to 'c'
    let hex: String = b"block 1 tx 1".iter().map(|b| format!("{b:02x}")).collect();
    assert!(text.contains(&hex));
    fs::write(&chain, text.replace(&hex, &format!("63{}", &hex[2..]))).unwrap();

    let out = ws.run(&["chain", "verify", "--chain", &ws.arg("c.chain")]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains(&ids[4]), "{}", stderr(&out));
}

#[test]
fn malformed_chain_reports_the_line() {
    let mut ws = Workspace::new();
    ws.chain(None, 1);
    let chain = ws.path("c.chain");
    let mut lines: Vec<String> = fs::read_to_string(&chain)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[3] = "{not json".into();
    fs::write(&chain, lines.join("\n")).unwrap();
    let out = ws.run(&["chain", "verify", "--chain", &ws.arg("c.chain")]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn central_lifecycle() {
    let mut ws = Workspace::new();
    let ids = ws.chain(None, 3);
    let chain = ws.arg("c.chain");
    let before = ws.ok(&["chain", "verify", "--chain", &chain]);

    let out = ws.ok(&[
        "redact",
        "propose",
        "--chain",
        &chain,
        "--tx",
        &ids[4],
        "--payload",
        "removed",
    ]);
    assert!(out.contains("Approved"), "{out}");
    let out = ws.ok(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    assert!(out.contains("all unchanged"), "{out}");

    let after = ws.ok(&["chain", "verify", "--chain", &chain]);
    // same tip hash: block hashes do not move
    assert_eq!(
        before.split_whitespace().last(),
        after.split_whitespace().last()
    );

    let audit = ws.ok(&["redact", "audit", "--chain", &chain, &ids[4]]);
    assert!(audit.contains("version 2, 1 redaction(s)"), "{audit}");
    assert_eq!(audit.matches("stamp 1:").count(), 1);

    let again = ws.run(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    assert_eq!(code(&again), 3);
    let list = ws.ok(&["redact", "list", "--chain", &chain]);
    assert!(list.contains("Executed"));
}

#[test]
fn execute_needs_a_matching_secret_key() {
    let mut ws = Workspace::new();
    let ids = ws.chain(None, 1);
    let chain = ws.arg("c.chain");
    ws.ok(&[
        "redact",
        "propose",
        "--chain",
        &chain,
        "--tx",
        &ids[0],
        "--payload",
        "x",
    ]);

    let secret = ws.secret.take();
    let out = ws.run(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    assert_eq!(code(&out), 3);

    ws.ok(&[
        "keygen",
        "--bits",
        "64",
        "--seed",
        "8",
        "--out",
        &ws.arg("other"),
    ]);
    ws.secret = Some(ws.path("other.key"));
    let out = ws.run(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    assert_eq!(code(&out), 3);

    ws.secret = Some(ws.path("k.pub"));
    assert_eq!(
        code(&ws.run(&["redact", "execute", "--chain", &chain, "--request", "1"])),
        3
    );

    ws.secret = secret;
    ws.ok(&["redact", "execute", "--chain", &chain, "--request", "1"]);
}

const PUBLIC_GOV: &str = r#"
mode = "public-trapdoor"
quorum = "1/2"
voting_window = 10
oversight_enabled = true
overseer = "regulator"
voters = ["a", "b", "c", "d"]
"#;

#[test]
fn public_trapdoor_tie_is_rejected() {
    let mut ws = Workspace::new();
    let ids = ws.chain(Some(PUBLIC_GOV), 1);
    let chain = ws.arg("c.chain");
    ws.ok(&[
        "redact",
        "propose",
        "--chain",
        &chain,
        "--tx",
        &ids[1],
        "--payload",
        "x",
        "--proposer",
        "a",
    ]);
    for (voter, flag) in [
        ("a", "--approve"),
        ("b", "--approve"),
        ("c", "--reject"),
        ("d", "--reject"),
    ] {
        ws.ok(&[
            "redact",
            "vote",
            "--chain",
            &chain,
            "--request",
            "1",
            "--voter",
            voter,
            flag,
        ]);
    }
    let double = ws.run(&[
        "redact",
        "vote",
        "--chain",
        &chain,
        "--request",
        "1",
        "--voter",
        "a",
        "--approve",
    ]);
    assert_eq!(code(&double), 3);
    let stranger = ws.run(&[
        "redact",
        "propose",
        "--chain",
        &chain,
        "--tx",
        &ids[1],
        "--payload",
        "y",
        "--proposer",
        "zed",
    ]);
    assert_eq!(code(&stranger), 3);

    let files = snapshot(ws.dir.path());
    let tally = ws.ok(&["redact", "tally", "--chain", &chain, "--request", "1"]);
    assert!(tally.contains("Rejected"), "{tally}");
    ws.ok(&["redact", "audit", "--chain", &chain, &ids[1]]);
    ws.ok(&["chain", "verify", "--chain", &chain]);
    assert_eq!(
        snapshot(ws.dir.path()),
        files,
        "read-only commands changed a file"
    );

    let out = ws.run(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn public_trapdoor_majority_and_veto() {
    let mut ws = Workspace::new();
    let ids = ws.chain(Some(PUBLIC_GOV), 1);
    let chain = ws.arg("c.chain");
    for tx in [&ids[0], &ids[1]] {
        ws.ok(&[
            "redact",
            "propose",
            "--chain",
            &chain,
            "--tx",
            tx,
            "--payload",
            "x",
            "--proposer",
            "b",
        ]);
    }
    for request in ["1", "2"] {
        for voter in ["a", "b", "c"] {
            ws.ok(&[
                "redact",
                "vote",
                "--chain",
                &chain,
                "--request",
                request,
                "--voter",
                voter,
                "--approve",
            ]);
        }
    }
    let tally = ws.ok(&["redact", "tally", "--chain", &chain, "--request", "1"]);
    assert!(tally.contains("Approved"), "{tally}");

    let bad = ws.run(&[
        "redact",
        "veto",
        "--chain",
        &chain,
        "--request",
        "2",
        "--overseer",
        "mallory",
    ]);
    assert_eq!(code(&bad), 3);
    let veto = ws.ok(&[
        "redact",
        "veto",
        "--chain",
        &chain,
        "--request",
        "2",
        "--overseer",
        "regulator",
    ]);
    assert!(veto.contains("Vetoed"));
    assert_eq!(
        code(&ws.run(&["redact", "execute", "--chain", &chain, "--request", "2"])),
        3
    );

    ws.ok(&["redact", "execute", "--chain", &chain, "--request", "1"]);
    ws.ok(&["chain", "verify", "--chain", &chain]);
}

#[test]
fn consortium_threshold_execution() {
    let mut ws = Workspace::new();
    let ids = ws.chain(Some("mode = \"consortium\"\nt = 3\nn = 5\n"), 2);
    let chain = ws.arg("c.chain");
    let out = ws.ok(&[
        "shares",
        "split",
        "-t",
        "3",
        "-n",
        "5",
        "--out-dir",
        &ws.arg("shares"),
    ]);
    assert_eq!(out.lines().filter(|l| l.ends_with(".txt")).count(), 5);
    ws.secret = None;
    ws.ok(&[
        "redact",
        "propose",
        "--chain",
        &chain,
        "--tx",
        &ids[2],
        "--payload",
        "gone",
    ]);

    let share = |i: usize| ws.arg(&format!("shares/share-{i}.txt"));
    let before = fs::read(ws.path("c.chain")).unwrap();
    let short = ws.run(&[
        "redact",
        "execute",
        "--chain",
        &chain,
        "--request",
        "1",
        "--share",
        &share(1),
        "--share",
        &share(4),
    ]);
    assert_eq!(code(&short), 4, "{}", stderr(&short));
    assert_eq!(fs::read(ws.path("c.chain")).unwrap(), before);

    ws.ok(&[
        "redact",
        "execute",
        "--chain",
        &chain,
        "--request",
        "1",
        "--share",
        &share(2),
        "--share",
        &share(5),
        "--share",
        &share(3),
    ]);
    let audit = ws.ok(&["redact", "audit", "--chain", &chain, &ids[2]]);
    assert!(audit.contains("1 redaction(s)"));
}

#[test]
fn lock_excludes_concurrent_writers() {
    let mut ws = Workspace::new();
    ws.chain(None, 1);
    let chain = ws.arg("c.chain");
    fs::write(ws.path("c.chain.lock"), "").unwrap();
    let out = ws.run(&["tx", "add", "--chain", &chain, "--payload", "x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("locked"));
    ws.ok(&["chain", "verify", "--chain", &chain]);
    fs::remove_file(ws.path("c.chain.lock")).unwrap();
    ws.ok(&["tx", "add", "--chain", &chain, "--payload", "x"]);
    assert!(!ws.path("c.chain.lock").exists());
}

#[test]
fn clawfree_demo_collides() {
    let ws = Workspace::new();
    let out = ws.ok(&[
        "clawfree",
        "demo",
        "--bits",
        "16",
        "--k",
        "6",
        "--message",
        "101100",
        "--new-message",
        "010011",
    ]);
    assert!(out.contains("collision found"));
    let bad = ws.run(&["clawfree", "demo", "--message", "10x"]);
    assert_eq!(code(&bad), 2);
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn bundled_demo_converges() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "sim",
        "run",
        "--config",
        &bundled("demo.toml"),
        "--out",
        &ws.arg("demo"),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("divergence: none"));
    assert!(stdout(&out).contains("safety: held"));
    let jsonl = fs::read_to_string(ws.path("demo.jsonl")).unwrap();
    assert!(jsonl.starts_with(r#"{"type":"report","format":"redchain-simreport/1""#));
    assert_eq!(
        fs::read_to_string(ws.path("demo.txt")).unwrap(),
        stdout(&out)
    );
}

#[test]
fn bundled_adversary_is_rejected() {
    let ws = Workspace::new();
    let out = ws.run(&["sim", "run", "--config", &bundled("adversary.toml")]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("chameleon verification failed"));
    assert!(text.contains("stale version"));
    assert!(text.contains("safety: held"));
}

#[test]
fn bundled_drop_warns_of_divergence() {
    let ws = Workspace::new();
    let out = ws.run(&["sim", "run", "--config", &bundled("drop.toml")]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("divergence: WARNING 1 of 4"));
    assert!(stderr(&out).contains("warning: 1 honest replica(s) diverged"));
}

#[test]
fn sim_config_errors_exit_2() {
    let ws = Workspace::new();
    let text = fs::read_to_string(bundled("demo.toml")).unwrap().replace(
        "role = \"sealer\"",
        "role = \"sealer\"\nbehavior = \"replay-old-version\"",
    );
    fs::write(ws.path("bad.toml"), text).unwrap();
    let out = ws.run(&["sim", "run", "--config", &ws.arg("bad.toml")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("must be honest"));
}
