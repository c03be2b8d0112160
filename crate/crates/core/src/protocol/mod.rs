//! Decentralized avatar authentication.
//!
//! Every role is a sans-IO state machine: it consumes one encoded frame and
//! returns at most one frame to send back. [`drive`] connects a session to a
//! [`Transport`]; [`one_party_run`] and [`two_party_run`] wire two sessions
//! together in-process over a [`pipe`].
//!
//! A verifier only ever reads the ledger through [`LedgerRead`]. No role
//! holds a handle to the identity provider.
//!
//! One-party flow: `Claim -> Challenge -> Response -> Accept`.
//!
//! Two-party flow: `Claim -> CounterClaim -> ResponseWithChallenge ->
//! ResponseWithKeyShare -> KeyConfirm(A) -> KeyConfirm(B)`. The session key
//! is `HKDF-SHA256(encode(K) || transcript_digest)` over the first four
//! frames, and each side confirms it with an HMAC over the same digest.

pub mod one_party;
pub mod transport;
pub mod two_party;
pub mod wire;

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::biometric::{self, BioTemplate, Challenge, DEFAULT_NOISE, DEFAULT_THRESHOLD};
use crate::group::{OpCounter, PairingGroup, SystemParams};
use crate::identity::{
    sha256, Digest32, IdpVerifyingKey, LedgerRead, MetaverseIdentityToken, PhysicalIdentity,
    VirtualIdentity,
};

pub use one_party::{Prover, ProverPhase, Verifier, VerifierPhase};
pub use transport::{pipe, PipeTransport, StreamTransport, Transport};
pub use two_party::{
    initiator_key_material, responder_key_material, Initiator, InitiatorPhase, Responder,
    ResponderPhase,
};
pub use wire::{
    dump_frames, parse_dump, AbortReason, Body, MsgType, Nonce, ProtocolMessage, SessionId,
    MAC_LEN, SESSION_ID_LEN,
};

pub const CHALLENGE_WINDOW: Duration = Duration::from_secs(30);
pub const SESSION_KEY_LEN: usize = 32;
pub const KDF_INFO: &[u8] = b"CHAMAUTH-SK-v1";
const CONFIRM_LABEL_A: &[u8] = b"CHAMAUTH-KC-A";
const CONFIRM_LABEL_B: &[u8] = b"CHAMAUTH-KC-B";
const SALT_LEN: usize = 16;

pub type SessionKey = [u8; SESSION_KEY_LEN];

/// Monotonic time source, injectable so deadlines can be tested.
pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock {
    base: Instant,
    offset: Mutex<Duration>,
}

impl ManualClock {
    pub fn new() -> Self {
        ManualClock {
            base: Instant::now(),
            offset: Mutex::new(Duration::ZERO),
        }
    }

    pub fn advance(&self, d: Duration) {
        *self.offset.lock().unwrap() += d;
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Instant {
        self.base + *self.offset.lock().unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Policy {
    /// Largest accepted fractional Hamming distance.
    pub threshold: f64,
    /// Bit-flip rate of the simulated live capture.
    pub capture_noise: f64,
    pub challenge_window: Duration,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            threshold: DEFAULT_THRESHOLD,
            capture_noise: DEFAULT_NOISE,
            challenge_window: CHALLENGE_WINDOW,
        }
    }
}

/// Everything a session may consult besides its peer.
pub struct Context<'a, G: PairingGroup> {
    pub params: &'a SystemParams<G>,
    pub idp_key: IdpVerifyingKey<G>,
    pub ledger: &'a (dyn LedgerRead + Sync),
    pub clock: &'a dyn Clock,
    pub policy: Policy,
}

impl<G: PairingGroup> Clone for Context<'_, G> {
    fn clone(&self) -> Self {
        Context {
            params: self.params,
            idp_key: self.idp_key,
            ledger: self.ledger,
            clock: self.clock,
            policy: self.policy,
        }
    }
}

/// A player's own material: token, chameleon secret, a virtual identity
/// and the biometric source used for live captures.
#[derive(Clone, Debug)]
pub struct Credentials<G: PairingGroup> {
    pub mit: MetaverseIdentityToken<G>,
    pub sk: G::Scalar,
    pub vid: VirtualIdentity<G>,
    pub live: BioTemplate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CostPhase {
    Round1,
    Round2,
    Session,
}

impl fmt::Display for CostPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostPhase::Round1 => "round1",
            CostPhase::Round2 => "round2",
            CostPhase::Session => "session",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseCosts {
    pub round1: OpCounter,
    pub round2: OpCounter,
    pub session: OpCounter,
}

impl PhaseCosts {
    pub fn get(&self, phase: CostPhase) -> OpCounter {
        match phase {
            CostPhase::Round1 => self.round1,
            CostPhase::Round2 => self.round2,
            CostPhase::Session => self.session,
        }
    }

    pub(crate) fn add(&mut self, phase: CostPhase, c: OpCounter) {
        match phase {
            CostPhase::Round1 => self.round1 += c,
            CostPhase::Round2 => self.round2 += c,
            CostPhase::Session => self.session += c,
        }
    }

    pub fn total(&self) -> OpCounter {
        self.round1 + self.round2 + self.session
    }
}

/// What a verifier keeps from an accepted peer for later tracing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Retained<G: PairingGroup> {
    pub mit: MetaverseIdentityToken<G>,
    pub vid: VirtualIdentity<G>,
    pub pid: PhysicalIdentity<G>,
    pub nonce: Nonce,
}

/// Terminal state of one side of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict<G: PairingGroup> {
    pub accepted: bool,
    pub reason: Option<AbortReason>,
    /// The abort was received from the peer rather than raised locally.
    pub aborted_by_peer: bool,
    pub retained: Option<Retained<G>>,
    pub session_key: Option<SessionKey>,
}

pub type VerifierVerdict<G> = Verdict<G>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Status {
    Running,
    Established,
    Aborted { reason: AbortReason, by_peer: bool },
}

/// A protocol role that can be driven over a transport.
pub trait Session {
    /// First frame for roles that speak first.
    fn start(&mut self) -> Option<Vec<u8>>;
    fn on_frame(&mut self, frame: &[u8]) -> Option<Vec<u8>>;
    /// Nothing more is expected from the peer.
    fn is_done(&self) -> bool;
}

/// Runs `session` until it is done. A failed send after the session is
/// already done (the peer hung up after our final message) is not an error.
pub fn drive<S, T>(session: &mut S, transport: &mut T) -> io::Result<()>
where
    S: Session + ?Sized,
    T: Transport + ?Sized,
{
    if let Some(f) = session.start() {
        transport.send_frame(&f)?;
    }
    while !session.is_done() {
        let frame = transport.recv_frame()?;
        if let Some(reply) = session.on_frame(&frame) {
            if let Err(e) = transport.send_frame(&reply) {
                if !session.is_done() {
                    return Err(e);
                }
            }
        }
    }
    Ok(())
}

/// Runs a prover and a verifier against each other on two threads.
pub fn one_party_run<G: PairingGroup>(
    prover: &mut Prover<'_, G>,
    verifier: &mut Verifier<'_, G>,
) -> io::Result<Verdict<G>> {
    run_pair(prover, verifier)?;
    Ok(verifier.verdict())
}

/// Drives `first` on a helper thread and `second` on the caller's thread.
/// Transport errors count only for a side that did not finish.
fn run_pair<A, B>(first: &mut A, second: &mut B) -> io::Result<()>
where
    A: Session + Send,
    B: Session,
{
    let (mut t1, mut t2) = pipe();
    std::thread::scope(|s| {
        let h = s.spawn(move || settle(first, &mut t1));
        let r2 = settle(second, &mut t2);
        let r1 = h.join().expect("session thread panicked");
        r1.and(r2)
    })
}

fn settle<S: Session + ?Sized, T: Transport>(session: &mut S, transport: &mut T) -> io::Result<()> {
    match drive(session, transport) {
        Err(_) if session.is_done() => Ok(()),
        r => r,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoPartyOutcome<G: PairingGroup> {
    pub verdict_a: Verdict<G>,
    pub verdict_b: Verdict<G>,
}

impl<G: PairingGroup> TwoPartyOutcome<G> {
    pub fn key_a(&self) -> Option<SessionKey> {
        self.verdict_a.session_key
    }

    pub fn key_b(&self) -> Option<SessionKey> {
        self.verdict_b.session_key
    }
}

/// Runs an initiator and a responder against each other on two threads.
pub fn two_party_run<G: PairingGroup>(
    a: &mut Initiator<'_, G>,
    b: &mut Responder<'_, G>,
) -> io::Result<TwoPartyOutcome<G>> {
    run_pair(b, a)?;
    Ok(TwoPartyOutcome {
        verdict_a: a.verdict(),
        verdict_b: b.verdict(),
    })
}

/// Ordered record of every frame sent or received.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    frames: Vec<Vec<u8>>,
}

impl Transcript {
    pub(crate) fn push(&mut self, frame: &[u8]) {
        self.frames.push(frame.to_vec());
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn message_digests(&self) -> Vec<Digest32> {
        self.frames.iter().map(|f| sha256(f)).collect()
    }

    /// SHA-256 over the digests of the first `n` frames.
    pub fn digest_prefix(&self, n: usize) -> Digest32 {
        let mut h = Sha256::new();
        for f in self.frames.iter().take(n) {
            h.update(sha256(f));
        }
        h.finalize().into()
    }

    pub fn dump(&self) -> String {
        dump_frames(&self.frames)
    }
}

pub fn derive_session_key<G: PairingGroup>(
    params: &SystemParams<G>,
    k: &G::G1,
    transcript_digest: &Digest32,
) -> SessionKey {
    let mut ikm = params.encode_g1(k);
    ikm.extend_from_slice(transcript_digest);
    let mut out = [0u8; SESSION_KEY_LEN];
    Hkdf::<Sha256>::new(None, &ikm)
        .expand(KDF_INFO, &mut out)
        .expect("32 bytes is a valid HKDF output length");
    out
}

fn confirm_mac(key: &SessionKey, label: &[u8], transcript_digest: &Digest32) -> Hmac<Sha256> {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(label);
    mac.update(transcript_digest);
    mac
}

pub(crate) fn confirm_tag(key: &SessionKey, label: &[u8], td: &Digest32) -> [u8; MAC_LEN] {
    confirm_mac(key, label, td).finalize().into_bytes().into()
}

pub(crate) fn confirm_ok(key: &SessionKey, label: &[u8], td: &Digest32, tag: &[u8]) -> bool {
    confirm_mac(key, label, td).verify_slice(tag).is_ok()
}

/// Steps (a) and (b): the token is signed and on the ledger, and the
/// virtual identity collides with it.
pub(crate) fn check_claim<G: PairingGroup>(
    ctx: &Context<'_, G>,
    mit: &MetaverseIdentityToken<G>,
    vid: &VirtualIdentity<G>,
) -> Result<(), AbortReason> {
    let params = ctx.params;
    let bytes = mit.to_bytes(params);
    let listed = ctx
        .ledger
        .fetch(&sha256(&bytes))
        .is_some_and(|b| b == bytes);
    if !listed || !mit.signature_valid(params, &ctx.idp_key) {
        return Err(AbortReason::BadMit);
    }
    if !mit.accepts(params, &vid.claim) {
        return Err(AbortReason::BadVid);
    }
    Ok(())
}

/// Pending challenge plus the per-session cache of consumed nonces.
#[derive(Clone, Debug, Default)]
pub(crate) struct Freshness {
    pending: Option<Challenge>,
    used: HashSet<Nonce>,
}

impl Freshness {
    /// Step (c).
    pub(crate) fn issue(&mut self, rng: &mut dyn RngCore, now: Instant) -> Nonce {
        loop {
            let c = Challenge::fresh(rng, now);
            if !self.used.contains(&c.nonce) {
                self.pending = Some(c);
                return c.nonce;
            }
        }
    }

    pub(crate) fn pending(&self) -> Option<&Challenge> {
        self.pending.as_ref()
    }

    /// Steps (d) to (f) against the peer's token. The pending challenge is
    /// consumed as soon as the freshness check passes.
    pub(crate) fn check_response<G: PairingGroup>(
        &mut self,
        ctx: &Context<'_, G>,
        mit: &MetaverseIdentityToken<G>,
        pid: &PhysicalIdentity<G>,
    ) -> Result<Nonce, AbortReason> {
        let pending = self.pending.ok_or(AbortReason::OutOfPhase)?;
        if ctx.clock.now() > pending.issued_at + ctx.policy.challenge_window {
            return Err(AbortReason::Timeout);
        }
        let feature = pid.feature().map_err(|_| AbortReason::Malformed)?;
        let extracted = biometric::extract_watermark(&feature, &pid.salt)
            .map_err(|_| AbortReason::Malformed)?;
        if extracted != pending.nonce || self.used.contains(&extracted) {
            return Err(AbortReason::Freshness);
        }
        self.pending = None;
        self.used.insert(extracted);
        if !biometric::matches(&feature, &mit.template(), ctx.policy.threshold) {
            return Err(AbortReason::BiometricMismatch);
        }
        if !mit.accepts(ctx.params, &pid.claim) {
            return Err(AbortReason::BadPid);
        }
        Ok(extracted)
    }
}

pub(crate) fn fresh_salt(rng: &mut dyn RngCore) -> [u8; SALT_LEN] {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    salt
}

pub(crate) fn fresh_session_id(rng: &mut dyn RngCore) -> SessionId {
    let mut id = [0u8; SESSION_ID_LEN];
    rng.fill_bytes(&mut id);
    id
}

/// State shared by every role: framing, transcript, status and costs.
pub(crate) struct Core<'a, G: PairingGroup> {
    pub(crate) ctx: Context<'a, G>,
    pub(crate) rng: rand_chacha::ChaCha20Rng,
    pub(crate) session_id: Option<SessionId>,
    pub(crate) transcript: Transcript,
    pub(crate) status: Status,
    pub(crate) costs: PhaseCosts,
}

pub(crate) enum Incoming<G: PairingGroup> {
    Message(Box<Body<G>>),
    Handled(Option<Vec<u8>>),
}

impl<'a, G: PairingGroup> Core<'a, G> {
    pub(crate) fn new(ctx: Context<'a, G>, rng: rand_chacha::ChaCha20Rng) -> Self {
        Core {
            ctx,
            rng,
            session_id: None,
            transcript: Transcript::default(),
            status: Status::Running,
            costs: PhaseCosts::default(),
        }
    }

    pub(crate) fn emit(&mut self, body: Body<G>) -> Vec<u8> {
        let sid = self.session_id.unwrap_or_default();
        let frame = ProtocolMessage::new(sid, body).encode(self.ctx.params);
        self.transcript.push(&frame);
        frame
    }

    pub(crate) fn abort(&mut self, reason: AbortReason) -> Option<Vec<u8>> {
        self.status = Status::Aborted {
            reason,
            by_peer: false,
        };
        Some(self.emit(Body::Abort { reason }))
    }

    /// Records and decodes an incoming frame. Malformed frames, foreign
    /// session ids and peer aborts are settled here.
    pub(crate) fn receive(&mut self, frame: &[u8]) -> Incoming<G> {
        if matches!(self.status, Status::Aborted { .. }) {
            return Incoming::Handled(None);
        }
        self.transcript.push(frame);
        let msg = match ProtocolMessage::decode(self.ctx.params, frame) {
            Ok(m) => m,
            Err(_) => return Incoming::Handled(self.abort(AbortReason::Malformed)),
        };
        match self.session_id {
            Some(sid) if sid != msg.session_id => {
                return Incoming::Handled(self.abort(AbortReason::Malformed));
            }
            None => self.session_id = Some(msg.session_id),
            _ => {}
        }
        if let Body::Abort { reason } = msg.body {
            self.status = Status::Aborted {
                reason,
                by_peer: true,
            };
            return Incoming::Handled(None);
        }
        Incoming::Message(Box::new(msg.body))
    }

    pub(crate) fn verdict(
        &self,
        retained: Option<Retained<G>>,
        session_key: Option<SessionKey>,
    ) -> Verdict<G> {
        let (accepted, reason, aborted_by_peer) = match self.status {
            Status::Established => (true, None, false),
            Status::Running => (false, None, false),
            Status::Aborted { reason, by_peer } => (false, Some(reason), by_peer),
        };
        Verdict {
            accepted,
            reason,
            aborted_by_peer,
            retained,
            session_key: if accepted { session_key } else { None },
        }
    }
}

/// Runs two sessions on the current thread, alternating frames until one
/// side stops replying. Returns every frame in order.
pub fn run_lockstep(first: &mut dyn Session, second: &mut dyn Session) -> Vec<Vec<u8>> {
    run_lockstep_with(first, second, |_, f| f)
}

/// As [`run_lockstep`], but every frame passes through `relay` (given its
/// zero-based position) before delivery. The returned frames are the
/// delivered ones.
pub fn run_lockstep_with<F>(
    first: &mut dyn Session,
    second: &mut dyn Session,
    mut relay: F,
) -> Vec<Vec<u8>>
where
    F: FnMut(usize, Vec<u8>) -> Vec<u8>,
{
    let mut frames = Vec::new();
    let mut next = first.start();
    let mut to_second = true;
    while let Some(f) = next {
        let f = relay(frames.len(), f);
        frames.push(f.clone());
        next = if to_second {
            second.on_frame(&f)
        } else {
            first.on_frame(&f)
        };
        to_second = !to_second;
    }
    frames
}
