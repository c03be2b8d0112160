mod bench;
mod commands;
mod session;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use chamauth::biometric::{DEFAULT_NOISE, DEFAULT_THRESHOLD};
use chamauth::group::{setup, toy_setup, PairingGroup, SystemParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Parser, Debug)]
#[command(
    name = "chamauth",
    version,
    about = "Traceable avatar authentication with chameleon collision signatures"
)]
struct Cli {
    #[command(flatten)]
    config: Config,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// BLS12-381 at the 128-bit level.
    Curve,
    /// Exponent-arithmetic group of prime order --toy-q.
    Toy,
}

#[derive(Args, Debug, Clone)]
pub struct Config {
    #[arg(long, value_enum, default_value_t = Backend::Curve, global = true)]
    pub backend: Backend,
    /// Prime order of the toy group; required with --backend toy.
    #[arg(long, global = true)]
    pub toy_q: Option<u64>,
    #[arg(
        long,
        env = "CHAMAUTH_DATA_DIR",
        default_value = "chamauth-data",
        global = true
    )]
    pub data_dir: PathBuf,
    /// Seed for every random choice; refused for key generation on the curve.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bit-flip rate of simulated captures, in [0, 0.5).
    #[arg(long, default_value_t = DEFAULT_NOISE, global = true)]
    pub noise: f64,
    /// Largest accepted fractional Hamming distance, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, global = true)]
    pub threshold: f64,
    #[arg(long, default_value_t = 30, global = true)]
    pub challenge_window_secs: u64,
}

impl Config {
    fn validate(&self) -> Result<()> {
        match (self.backend, self.toy_q) {
            (Backend::Toy, None) => bail!("--backend toy requires --toy-q"),
            (Backend::Curve, Some(_)) => bail!("--toy-q only applies to --backend toy"),
            _ => {}
        }
        if !(0.0..0.5).contains(&self.noise) {
            bail!("--noise must lie in [0, 0.5)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            bail!("--threshold must lie in (0, 1)");
        }
        if self.challenge_window_secs == 0 {
            bail!("--challenge-window-secs must be at least 1");
        }
        Ok(())
    }

    /// A generator for `purpose`: derived from --seed when given, from the
    /// OS otherwise.
    pub fn rng(&self, purpose: &str) -> ChaCha20Rng {
        match self.seed {
            Some(s) => {
                let mut seed = [0u8; 32];
                seed[..8].copy_from_slice(&s.to_be_bytes());
                let tag = chamauth::identity::sha256(purpose.as_bytes());
                seed[8..].copy_from_slice(&tag[..24]);
                ChaCha20Rng::from_seed(seed)
            }
            None => ChaCha20Rng::from_entropy(),
        }
    }

    /// Key material must come from the OS on the curve backend.
    pub fn key_rng(&self, purpose: &str) -> Result<ChaCha20Rng> {
        if self.seed.is_some() && self.backend == Backend::Curve {
            bail!("refusing --seed for key generation on the curve backend");
        }
        Ok(self.rng(purpose))
    }

    pub fn data(&self) -> store::DataDir {
        store::DataDir::new(self.data_dir.clone())
    }

    pub fn policy(&self) -> chamauth::protocol::Policy {
        chamauth::protocol::Policy {
            threshold: self.threshold,
            capture_noise: self.noise,
            challenge_window: std::time::Duration::from_secs(self.challenge_window_secs),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a chameleon key pair.
    Keygen {
        /// Secret key file; the public key goes next to it as `<stem>.pub`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "pub")]
        pub_out: Option<PathBuf>,
    },
    /// Identity provider operations.
    Idp {
        #[command(subcommand)]
        command: IdpCommand,
    },
    /// Synthetic biometrics.
    Bio {
        #[command(subcommand)]
        command: BioCommand,
    },
    /// Avatar (virtual identity) operations.
    Avatar {
        #[command(subcommand)]
        command: AvatarCommand,
    },
    /// Authentication sessions.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Ask the identity provider to trace a retained bundle.
    Trace {
        #[arg(long)]
        request: PathBuf,
    },
    /// Operation counts and timings.
    Bench(bench::BenchArgs),
}

#[derive(Subcommand, Debug)]
enum IdpCommand {
    /// Create a provider key, an empty ledger and an empty registry.
    Init {
        #[arg(long)]
        force: bool,
    },
    /// Issue a token for a player.
    Register {
        #[arg(long)]
        real_id: String,
        #[arg(long)]
        anon_id: String,
        #[arg(long)]
        pubkey: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Token output file [default: <data-dir>/<digest>.mit].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the ledger after verifying its hash chain.
    Show,
}

#[derive(Subcommand, Debug)]
enum BioCommand {
    /// Write the synthetic template of `subject`.
    Template {
        #[arg(long)]
        subject: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rates of native and watermarked matching.
    Simulate {
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Comma-separated thresholds [default: 0.20..0.45 step 0.05 and --threshold].
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum AvatarCommand {
    /// Sign an avatar description into a virtual identity.
    Create {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        mit: PathBuf,
        #[arg(long)]
        name: String,
        /// Free-form appearance description, hashed into the identity.
        #[arg(long, default_value = "")]
        appearance: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Role {
    A,
    B,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    OneParty,
    TwoParty,
}

#[derive(Subcommand, Debug)]
enum SessionCommand {
    /// Run one session over TCP. In one-party mode `a` proves and `b` verifies.
    Run(Box<session::RunArgs>),
    /// Run sessions in-process among freshly registered players.
    Demo {
        #[arg(long, value_enum, default_value_t = Mode::TwoParty)]
        mode: Mode,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..))]
        players: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
    },
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Endpoint {
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long)]
    pub connect: Option<SocketAddr>,
}

fn run<G: PairingGroup>(params: SystemParams<G>, cfg: &Config, cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Keygen { out, pub_out } => commands::keygen(&params, cfg, &out, pub_out),
        Command::Idp { command } => match command {
            IdpCommand::Init { force } => commands::idp_init(&params, cfg, force),
            IdpCommand::Register {
                real_id,
                anon_id,
                pubkey,
                template,
                out,
            } => commands::idp_register(&params, cfg, &real_id, &anon_id, &pubkey, &template, out),
            IdpCommand::Show => commands::idp_show(&params, cfg),
        },
        Command::Bio { command } => match command {
            BioCommand::Template { subject, out } => commands::bio_template(subject, &out),
            BioCommand::Simulate { trials, thresholds } => {
                commands::bio_simulate(cfg, trials as usize, thresholds)
            }
        },
        Command::Avatar {
            command:
                AvatarCommand::Create {
                    key,
                    mit,
                    name,
                    appearance,
                    out,
                },
        } => commands::avatar_create(&params, &key, &mit, &name, &appearance, &out),
        Command::Session { command } => match command {
            SessionCommand::Run(args) => session::run(&params, cfg, &args),
            SessionCommand::Demo {
                mode,
                players,
                runs,
            } => session::demo(params, cfg, mode, players as usize, runs as usize),
        },
        Command::Trace { request } => commands::trace(&params, cfg, &request),
        Command::Bench(args) => bench::run(params, cfg, &args),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.config;
    cfg.validate()?;
    match cfg.backend {
        Backend::Curve => run(setup(128)?, &cfg, cli.command),
        Backend::Toy => run(toy_setup(cfg.toy_q.expect("validated"))?, &cfg, cli.command),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
