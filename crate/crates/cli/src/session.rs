use std::io;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use chamauth::group::{PairingGroup, SystemParams};
use chamauth::identity::sha256;
use chamauth::protocol::{
    drive, one_party_run, two_party_run, Context, Credentials, Initiator, Prover, Responder,
    Session, SessionKey, StreamTransport, SystemClock, Transcript, Verdict, Verifier,
};
use chamauth::sim::World;
use chamauth::tracing::{TraceRequest, Tracer};
use clap::Args;
use rand::RngCore;

use crate::store;
use crate::{Config, Endpoint, Mode, Role};

const CONNECT_ATTEMPTS: u32 = 50;
const CONNECT_BACKOFF: Duration = Duration::from_millis(200);
/// Slack on top of the challenge window before a silent peer is dropped.
const READ_GRACE: Duration = Duration::from_secs(5);

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub role: Role,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub endpoint: Endpoint,
    /// Chameleon secret key file (not needed by the one-party verifier).
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long)]
    pub mit: Option<PathBuf>,
    #[arg(long)]
    pub vid: Option<PathBuf>,
    /// Template standing in for the live biometric source.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Write a trace request for the accepted peer to this file.
    #[arg(long)]
    pub retain: Option<PathBuf>,
    /// Write the frames of the run, one hex line each, to this file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Reporter label stored in the trace request.
    #[arg(long, default_value = "anonymous")]
    pub reporter: String,
}

fn credentials<G: PairingGroup>(
    params: &SystemParams<G>,
    args: &RunArgs,
) -> Result<Credentials<G>> {
    fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        p.as_deref()
            .with_context(|| format!("--{flag} is required for this role"))
    }
    let kp = store::read_keypair(params, need(&args.key, "key")?)?;
    let mit = store::read_mit(params, need(&args.mit, "mit")?)?;
    if *kp.public() != mit.pk {
        bail!("the key does not belong to the token");
    }
    Ok(Credentials {
        vid: store::read_vid(params, need(&args.vid, "vid")?)?,
        live: store::read_template(need(&args.template, "template")?)?,
        sk: *kp.secret(),
        mit,
    })
}

fn connect(endpoint: &Endpoint, read_timeout: Duration) -> Result<TcpStream> {
    let stream = if let Some(addr) = endpoint.listen {
        let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        listener.accept()?.0
    } else {
        let addr = endpoint.connect.expect("clap enforces one endpoint");
        let mut attempt = 0;
        loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) if attempt + 1 < CONNECT_ATTEMPTS => {
                    attempt += 1;
                    if attempt == 1 {
                        eprintln!("waiting for {addr}: {e}");
                    }
                    thread::sleep(CONNECT_BACKOFF);
                }
                Err(e) => return Err(e).with_context(|| format!("connecting to {addr}")),
            }
        }
    };
    stream.set_read_timeout(Some(read_timeout))?;
    stream.set_nodelay(true)?;
    Ok(stream)
}

pub fn fingerprint(key: &SessionKey) -> String {
    hex::encode(&sha256(key)[..8])
}

fn report<G: PairingGroup>(v: &Verdict<G>) {
    println!("accepted={}", v.accepted);
    println!(
        "reason={}",
        v.reason
            .map(|r| r.name().to_string())
            .unwrap_or_else(|| "-".into())
    );
    println!("aborted_by_peer={}", v.aborted_by_peer);
    if let Some(k) = &v.session_key {
        println!("session_key_fingerprint={}", fingerprint(k));
    }
}

fn finish<G: PairingGroup>(
    params: &SystemParams<G>,
    args: &RunArgs,
    outcome: io::Result<()>,
    verdict: Verdict<G>,
    transcript: &Transcript,
) -> Result<ExitCode> {
    if let Some(p) = &args.transcript {
        store::write(p, transcript.dump().as_bytes())?;
    }
    report(&verdict);
    if let Err(e) = outcome {
        // A verdict reached before the link failed still stands.
        if verdict.reason.is_none() && !verdict.accepted {
            return Err(e).context("session transport");
        }
    }
    if let (Some(path), Some(retained)) = (&args.retain, &verdict.retained) {
        let req = TraceRequest::from_retained(retained, args.reporter.clone());
        store::write(path, &req.to_bytes(params))?;
        println!("retained={}", path.display());
    }
    Ok(if verdict.accepted {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn run<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    args: &RunArgs,
) -> Result<ExitCode> {
    let (idp_key, ledger) = cfg.data().load_public(params)?;
    let clock = SystemClock;
    let ctx = Context {
        params,
        idp_key,
        ledger: &ledger,
        clock: &clock,
        policy: cfg.policy(),
    };
    let role = match args.role {
        Role::A => "a",
        Role::B => "b",
    };
    let rng = cfg.rng(&format!("session:{role}"));
    let creds = match (args.mode, args.role) {
        (Mode::OneParty, Role::B) => None,
        _ => Some(credentials(params, args)?),
    };
    let stream = connect(&args.endpoint, ctx.policy.challenge_window + READ_GRACE)?;
    let mut transport = StreamTransport::new(stream);
    println!(
        "role={role} mode={}",
        match args.mode {
            Mode::OneParty => "one-party",
            Mode::TwoParty => "two-party",
        }
    );

    fn go<S: Session>(s: &mut S, t: &mut StreamTransport<TcpStream>) -> io::Result<()> {
        drive(s, t)
    }

    match (args.mode, args.role, creds) {
        (Mode::OneParty, Role::A, Some(c)) => {
            let mut s = Prover::new(ctx, c, rng);
            let r = go(&mut s, &mut transport);
            finish(params, args, r, s.verdict(), s.transcript())
        }
        (Mode::OneParty, Role::B, _) => {
            let mut s = Verifier::new(ctx, rng);
            let r = go(&mut s, &mut transport);
            finish(params, args, r, s.verdict(), s.transcript())
        }
        (Mode::TwoParty, Role::A, Some(c)) => {
            let mut s = Initiator::new(ctx, c, rng);
            let r = go(&mut s, &mut transport);
            finish(params, args, r, s.verdict(), s.transcript())
        }
        (Mode::TwoParty, Role::B, Some(c)) => {
            let mut s = Responder::new(ctx, c, rng);
            let r = go(&mut s, &mut transport);
            finish(params, args, r, s.verdict(), s.transcript())
        }
        _ => unreachable!("credentials loaded for every proving role"),
    }
}

/// In-process runs between neighbouring players of a fresh world. One-party
/// runs also trace the accepted prover.
pub fn demo<G: PairingGroup>(
    params: SystemParams<G>,
    cfg: &Config,
    mode: Mode,
    players: usize,
    runs: usize,
) -> Result<ExitCode> {
    let seed = cfg.seed.unwrap_or_else(|| rand::rngs::OsRng.next_u64());
    let mut world = World::new(params, players, seed)?;
    let rngs: Vec<_> = (0..runs)
        .map(|_| (world.session_rng(), world.session_rng()))
        .collect();
    let clock = SystemClock;
    let world = &world;
    let mut failures = 0;
    println!("players={players} runs={runs} seed={seed}");
    for (i, (r1, r2)) in rngs.into_iter().enumerate() {
        let a = &world.players[i % players];
        let b = &world.players[(i + 1) % players];
        let ctx = world.context(&clock, cfg.policy());
        let (ok, line) = match mode {
            Mode::OneParty => {
                let mut prover = Prover::new(ctx.clone(), a.creds.clone(), r1);
                let mut verifier = Verifier::new(ctx, r2);
                let v = one_party_run(&mut prover, &mut verifier)?;
                let traced = match &v.retained {
                    Some(ret) => {
                        let mut tracer = Tracer::new(&world.idp);
                        tracer.threshold = cfg.threshold;
                        let t = tracer.trace(&TraceRequest::from_retained(ret, "demo"));
                        format!(
                            " traced={} real_id={}",
                            t.reason(),
                            t.real_id()
                                .map(|r| String::from_utf8_lossy(r).into_owned())
                                .unwrap_or_else(|| "-".into())
                        )
                    }
                    None => String::new(),
                };
                (
                    v.accepted,
                    format!(
                        "prover={} accepted={} reason={}{traced}",
                        String::from_utf8_lossy(&a.real_id),
                        v.accepted,
                        v.reason.map(|r| r.name()).unwrap_or("-"),
                    ),
                )
            }
            Mode::TwoParty => {
                let mut ia = Initiator::new(ctx.clone(), a.creds.clone(), r1);
                let mut rb = Responder::new(ctx, b.creds.clone(), r2);
                let out = two_party_run(&mut ia, &mut rb)?;
                let keys_equal = out.key_a().is_some() && out.key_a() == out.key_b();
                let fp = out
                    .key_a()
                    .map(|k| fingerprint(&k))
                    .unwrap_or_else(|| "-".into());
                (
                    out.verdict_a.accepted && out.verdict_b.accepted && keys_equal,
                    format!(
                        "a={} b={} accepted_a={} accepted_b={} keys_equal={keys_equal} session_key_fingerprint={fp}",
                        String::from_utf8_lossy(&a.real_id),
                        String::from_utf8_lossy(&b.real_id),
                        out.verdict_a.accepted,
                        out.verdict_b.accepted,
                    ),
                )
            }
        };
        if !ok {
            failures += 1;
        }
        println!("run index={i} {line}");
    }
    println!("failures={failures}");
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
