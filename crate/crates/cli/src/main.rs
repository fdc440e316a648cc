mod commands;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redchain::chamhash::SUPPORTED_SECURITY_BITS;

#[derive(Parser)]
#[command(
    name = "redchain",
    version,
    about = "Redactable ledger toolkit built on chameleon hashes",
    after_help = "Exit status: 0 success, 1 I/O failure or lock held, 2 usage or config error, \
                  3 not authorized, 4 integrity failure.\n\
                  Secret keys are read from the file named by REDCHAIN_SECRET_KEY."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a chameleon hash key pair
    Keygen(KeygenArgs),
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Tx(TxCommand),
    #[command(subcommand)]
    Block(BlockCommand),
    #[command(subcommand)]
    Redact(RedactCommand),
    #[command(subcommand)]
    Shares(SharesCommand),
    #[command(subcommand)]
    Clawfree(ClawfreeCommand),
    #[command(subcommand)]
    Sim(SimCommand),
}

fn parse_bits(s: &str) -> Result<u32, String> {
    let bits: u32 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if SUPPORTED_SECURITY_BITS.contains(&bits) {
        Ok(bits)
    } else {
        Err(format!("supported sizes are {SUPPORTED_SECURITY_BITS:?}"))
    }
}

#[derive(Args)]
struct KeygenArgs {
    /// Security level: 64 (insecure, for tests), 256, 2048 or 3072
    #[arg(long, value_parser = parse_bits)]
    bits: u32,
    /// Derive the key deterministically from this seed
    #[arg(long)]
    seed: Option<u64>,
    /// Writes PREFIX.pub and PREFIX.key
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PayloadArgs {
    /// Payload as UTF-8 text
    #[arg(long)]
    payload: Option<String>,
    /// Payload as lowercase hex
    #[arg(long)]
    payload_hex: Option<String>,
}

/// Chain files
#[derive(Subcommand)]
enum ChainCommand {
    /// Create a genesis-only chain
    Init {
        #[arg(long)]
        chain: PathBuf,
        /// Public (or secret) key file
        #[arg(long)]
        key: PathBuf,
        /// Governance config (TOML); defaults to central mode
        #[arg(long)]
        governance: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Validate every block and transaction
    Verify {
        #[arg(long)]
        chain: PathBuf,
    },
}

/// Pending transactions
#[derive(Subcommand)]
enum TxCommand {
    /// Hash a payload and add it to the pending pool
    Add {
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        payload: PayloadArgs,
    },
}

/// Blocks
#[derive(Subcommand)]
enum BlockCommand {
    /// Seal all pending transactions into a new block
    Seal {
        #[arg(long)]
        chain: PathBuf,
        /// Block timestamp; defaults to the current Unix time
        #[arg(long)]
        timestamp: Option<u64>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct VoteArgs {
    #[arg(long)]
    approve: bool,
    #[arg(long)]
    reject: bool,
}

/// Redaction lifecycle
#[derive(Subcommand)]
enum RedactCommand {
    /// Open a redaction request for a transaction
    Propose {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        tx: String,
        #[command(flatten)]
        payload: PayloadArgs,
        #[arg(long, default_value = "operator")]
        proposer: String,
    },
    /// Cast a vote (public-trapdoor mode)
    Vote {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        request: u64,
        #[arg(long)]
        voter: String,
        #[command(flatten)]
        vote: VoteArgs,
    },
    /// Show what a tally would decide now; changes nothing
    Tally {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        request: u64,
    },
    /// Perform an approved redaction
    Execute {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        request: u64,
        /// Share file (consortium mode); repeat for each share
        #[arg(long = "share")]
        shares: Vec<PathBuf>,
    },
    /// Veto an approved request as the overseer
    Veto {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        request: u64,
        #[arg(long)]
        overseer: String,
    },
    /// List the redaction stamps of a transaction
    Audit {
        #[arg(long)]
        chain: PathBuf,
        tx: String,
    },
    /// List all requests
    List {
        #[arg(long)]
        chain: PathBuf,
    },
}

/// Trapdoor sharing
#[derive(Subcommand)]
enum SharesCommand {
    /// Split the trapdoor from REDCHAIN_SECRET_KEY into share files
    Split {
        #[arg(long, short = 't')]
        threshold: usize,
        #[arg(long, short = 'n')]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

/// Claw-free construction
#[derive(Subcommand)]
enum ClawfreeCommand {
    /// Hash a bit message and compute a collision for another with the factorization
    Demo {
        /// Bits per Blum prime
        #[arg(long, default_value_t = 32)]
        bits: u64,
        /// Message length in bits
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Original message as a bit string; defaults to a digest prefix of "original"
        #[arg(long)]
        message: Option<String>,
        /// Replacement message; defaults to a digest prefix of "redacted"
        #[arg(long)]
        new_message: Option<String>,
    },
}

/// Network simulation
#[derive(Subcommand)]
enum SimCommand {
    /// Run a simulation from a TOML config
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Writes PREFIX.txt and PREFIX.jsonl
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
