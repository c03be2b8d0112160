//! Two-party mutual authentication with session-key agreement.
//!
//! `A` holds `x_a`, `B` draws a fresh `w` and sends `g1^w`. Both end up with
//! `K = (g1^w)^(1/x_a) = y_a^w`.

use rand_chacha::ChaCha20Rng;

use super::{
    check_claim, confirm_ok, confirm_tag, derive_session_key, fresh_salt, fresh_session_id,
    AbortReason, Body, Context, Core, CostPhase, Credentials, Freshness, Incoming, Nonce,
    PhaseCosts, Retained, Session, SessionKey, Status, Transcript, Verdict, CONFIRM_LABEL_A,
    CONFIRM_LABEL_B,
};
use crate::chameleon::PublicKey;
use crate::error::{Error, Result};
use crate::group::{measure, PairingGroup, SystemParams};
use crate::identity::{self, Digest32, MetaverseIdentityToken, PhysicalIdentity, VirtualIdentity};

/// Frames covered by the transcript digest: the four authentication messages.
const KEYED_FRAMES: usize = 4;

/// `K = share^(1/x)`: one G1 exponentiation.
pub fn initiator_key_material<G: PairingGroup>(
    params: &SystemParams<G>,
    x: &G::Scalar,
    share: &G::G1,
) -> Result<G::G1> {
    let inv = params.group().scalar_inv(x).ok_or(Error::ZeroScalar)?;
    Ok(params.exp_g1(share, &inv))
}

/// `K = y1^w`: one G1 exponentiation.
pub fn responder_key_material<G: PairingGroup>(
    params: &SystemParams<G>,
    peer_pk: &PublicKey<G>,
    w: &G::Scalar,
) -> G::G1 {
    params.exp_g1(&peer_pk.g1, w)
}

fn make_pid<G: PairingGroup>(
    core: &mut Core<'_, G>,
    creds: &Credentials<G>,
    nonce: &Nonce,
) -> Result<PhysicalIdentity<G>> {
    let Core { ctx, rng, .. } = core;
    let salt = fresh_salt(rng);
    identity::create_pid(
        ctx.params,
        &creds.sk,
        &creds.mit,
        &creds.live,
        nonce,
        &salt,
        ctx.policy.capture_noise,
        rng,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitiatorPhase {
    Start,
    AwaitCounterClaim,
    AwaitKeyShare,
    AwaitConfirm,
    Established,
    Aborted,
}

/// Party `A`.
pub struct Initiator<'a, G: PairingGroup> {
    core: Core<'a, G>,
    creds: Credentials<G>,
    phase: InitiatorPhase,
    freshness: Freshness,
    peer: Option<(MetaverseIdentityToken<G>, VirtualIdentity<G>)>,
    retained: Option<Retained<G>>,
    transcript_digest: Option<Digest32>,
    candidate_key: Option<SessionKey>,
    session_key: Option<SessionKey>,
}

impl<'a, G: PairingGroup> Initiator<'a, G> {
    pub fn new(ctx: Context<'a, G>, creds: Credentials<G>, rng: ChaCha20Rng) -> Self {
        Initiator {
            core: Core::new(ctx, rng),
            creds,
            phase: InitiatorPhase::Start,
            freshness: Freshness::default(),
            peer: None,
            retained: None,
            transcript_digest: None,
            candidate_key: None,
            session_key: None,
        }
    }

    pub fn phase(&self) -> InitiatorPhase {
        match self.core.status {
            Status::Aborted { .. } => InitiatorPhase::Aborted,
            _ => self.phase,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.core.transcript
    }

    pub fn costs(&self) -> PhaseCosts {
        self.core.costs
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.session_key.as_ref()
    }

    pub fn verdict(&self) -> Verdict<G> {
        self.core.verdict(self.retained.clone(), self.session_key)
    }

    fn on_counter_claim(
        &mut self,
        mit: MetaverseIdentityToken<G>,
        vid: VirtualIdentity<G>,
        nonce: Nonce,
    ) -> Option<Vec<u8>> {
        if let Err(r) = check_claim(&self.core.ctx, &mit, &vid) {
            return self.core.abort(r);
        }
        self.peer = Some((mit, vid));
        let pid = match make_pid(&mut self.core, &self.creds, &nonce) {
            Ok(p) => p,
            Err(_) => return self.core.abort(AbortReason::Malformed),
        };
        let now = self.core.ctx.clock.now();
        let challenge = self.freshness.issue(&mut self.core.rng, now);
        self.phase = InitiatorPhase::AwaitKeyShare;
        Some(self.core.emit(Body::ResponseWithChallenge {
            pid,
            nonce: challenge,
        }))
    }

    fn on_key_share(&mut self, pid: PhysicalIdentity<G>, share: G::G1) -> Option<Vec<u8>> {
        let (mit, vid) = self.peer.clone().expect("counter-claim precedes key share");
        let nonce = match self.freshness.check_response(&self.core.ctx, &mit, &pid) {
            Ok(n) => n,
            Err(r) => return self.core.abort(r),
        };
        self.retained = Some(Retained {
            mit,
            vid,
            pid,
            nonce,
        });
        let params = self.core.ctx.params;
        let k = match initiator_key_material(params, &self.creds.sk, &share) {
            Ok(k) => k,
            Err(_) => return self.core.abort(AbortReason::Malformed),
        };
        let td = self.core.transcript.digest_prefix(KEYED_FRAMES);
        let key = derive_session_key(params, &k, &td);
        self.transcript_digest = Some(td);
        self.candidate_key = Some(key);
        self.phase = InitiatorPhase::AwaitConfirm;
        Some(self.core.emit(Body::KeyConfirm {
            tag: confirm_tag(&key, CONFIRM_LABEL_A, &td),
        }))
    }

    fn on_confirm(&mut self, tag: &[u8]) -> Option<Vec<u8>> {
        let key = self.candidate_key.expect("key derived before confirmation");
        let td = self
            .transcript_digest
            .expect("digest fixed before confirmation");
        if !confirm_ok(&key, CONFIRM_LABEL_B, &td, tag) {
            self.candidate_key = None;
            return self.core.abort(AbortReason::KeyConfirmation);
        }
        self.session_key = Some(key);
        self.phase = InitiatorPhase::Established;
        self.core.status = Status::Established;
        None
    }
}

impl<G: PairingGroup> Session for Initiator<'_, G> {
    fn start(&mut self) -> Option<Vec<u8>> {
        if self.phase != InitiatorPhase::Start {
            return None;
        }
        self.core.session_id = Some(fresh_session_id(&mut self.core.rng));
        self.phase = InitiatorPhase::AwaitCounterClaim;
        Some(self.core.emit(Body::Claim {
            mit: self.creds.mit.clone(),
            vid: self.creds.vid.clone(),
        }))
    }

    fn on_frame(&mut self, frame: &[u8]) -> Option<Vec<u8>> {
        let body = match self.core.receive(frame) {
            Incoming::Message(b) => *b,
            Incoming::Handled(reply) => return reply,
        };
        let (phase, (reply, cost)) = match (self.phase, body) {
            (InitiatorPhase::AwaitCounterClaim, Body::CounterClaim { mit, vid, nonce }) => (
                CostPhase::Round2,
                measure(|| self.on_counter_claim(mit, vid, nonce)),
            ),
            (InitiatorPhase::AwaitKeyShare, Body::ResponseWithKeyShare { pid, key_share }) => (
                CostPhase::Session,
                measure(|| self.on_key_share(pid, key_share)),
            ),
            (InitiatorPhase::AwaitConfirm, Body::KeyConfirm { tag }) => {
                (CostPhase::Session, measure(|| self.on_confirm(&tag)))
            }
            _ => return self.core.abort(AbortReason::OutOfPhase),
        };
        self.core.costs.add(phase, cost);
        reply
    }

    fn is_done(&self) -> bool {
        self.core.status != Status::Running
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponderPhase {
    AwaitClaim,
    AwaitResponse,
    AwaitConfirm,
    Established,
    Aborted,
}

/// Party `B`.
pub struct Responder<'a, G: PairingGroup> {
    core: Core<'a, G>,
    creds: Credentials<G>,
    phase: ResponderPhase,
    freshness: Freshness,
    peer: Option<(MetaverseIdentityToken<G>, VirtualIdentity<G>)>,
    retained: Option<Retained<G>>,
    w: Option<G::Scalar>,
    session_key: Option<SessionKey>,
}

impl<'a, G: PairingGroup> Responder<'a, G> {
    pub fn new(ctx: Context<'a, G>, creds: Credentials<G>, rng: ChaCha20Rng) -> Self {
        Responder {
            core: Core::new(ctx, rng),
            creds,
            phase: ResponderPhase::AwaitClaim,
            freshness: Freshness::default(),
            peer: None,
            retained: None,
            w: None,
            session_key: None,
        }
    }

    pub fn phase(&self) -> ResponderPhase {
        match self.core.status {
            Status::Aborted { .. } => ResponderPhase::Aborted,
            _ => self.phase,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.core.transcript
    }

    pub fn costs(&self) -> PhaseCosts {
        self.core.costs
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.session_key.as_ref()
    }

    pub fn verdict(&self) -> Verdict<G> {
        self.core.verdict(self.retained.clone(), self.session_key)
    }

    fn on_claim(
        &mut self,
        mit: MetaverseIdentityToken<G>,
        vid: VirtualIdentity<G>,
    ) -> Option<Vec<u8>> {
        if let Err(r) = check_claim(&self.core.ctx, &mit, &vid) {
            return self.core.abort(r);
        }
        self.peer = Some((mit, vid));
        let now = self.core.ctx.clock.now();
        let nonce = self.freshness.issue(&mut self.core.rng, now);
        self.phase = ResponderPhase::AwaitResponse;
        Some(self.core.emit(Body::CounterClaim {
            mit: self.creds.mit.clone(),
            vid: self.creds.vid.clone(),
            nonce,
        }))
    }

    fn on_response(&mut self, pid: PhysicalIdentity<G>, challenge: Nonce) -> Option<Vec<u8>> {
        let (mit, vid) = self.peer.clone().expect("claim precedes response");
        let nonce = match self.freshness.check_response(&self.core.ctx, &mit, &pid) {
            Ok(n) => n,
            Err(r) => return self.core.abort(r),
        };
        self.retained = Some(Retained {
            mit,
            vid,
            pid,
            nonce,
        });
        let own_pid = match make_pid(&mut self.core, &self.creds, &challenge) {
            Ok(p) => p,
            Err(_) => return self.core.abort(AbortReason::Malformed),
        };
        let params = self.core.ctx.params;
        let w = params.random_nonzero_scalar(&mut self.core.rng);
        let key_share = params.exp_g1(params.g1(), &w);
        self.w = Some(w);
        self.phase = ResponderPhase::AwaitConfirm;
        Some(self.core.emit(Body::ResponseWithKeyShare {
            pid: own_pid,
            key_share,
        }))
    }

    fn on_confirm(&mut self, tag: &[u8]) -> Option<Vec<u8>> {
        let params = self.core.ctx.params;
        let w = self.w.take().expect("share sent before confirmation");
        let peer_pk = self.peer.as_ref().expect("peer known").0.pk;
        let k = responder_key_material(params, &peer_pk, &w);
        let td = self.core.transcript.digest_prefix(KEYED_FRAMES);
        let key = derive_session_key(params, &k, &td);
        if !confirm_ok(&key, CONFIRM_LABEL_A, &td, tag) {
            return self.core.abort(AbortReason::KeyConfirmation);
        }
        self.session_key = Some(key);
        self.phase = ResponderPhase::Established;
        self.core.status = Status::Established;
        Some(self.core.emit(Body::KeyConfirm {
            tag: confirm_tag(&key, CONFIRM_LABEL_B, &td),
        }))
    }
}

impl<G: PairingGroup> Session for Responder<'_, G> {
    fn start(&mut self) -> Option<Vec<u8>> {
        None
    }

    fn on_frame(&mut self, frame: &[u8]) -> Option<Vec<u8>> {
        let body = match self.core.receive(frame) {
            Incoming::Message(b) => *b,
            Incoming::Handled(reply) => return reply,
        };
        let (phase, (reply, cost)) = match (self.phase, body) {
            (ResponderPhase::AwaitClaim, Body::Claim { mit, vid }) => {
                (CostPhase::Round1, measure(|| self.on_claim(mit, vid)))
            }
            (ResponderPhase::AwaitResponse, Body::ResponseWithChallenge { pid, nonce }) => {
                (CostPhase::Round2, measure(|| self.on_response(pid, nonce)))
            }
            (ResponderPhase::AwaitConfirm, Body::KeyConfirm { tag }) => {
                (CostPhase::Session, measure(|| self.on_confirm(&tag)))
            }
            _ => return self.core.abort(AbortReason::OutOfPhase),
        };
        self.core.costs.add(phase, cost);
        reply
    }

    fn is_done(&self) -> bool {
        self.core.status != Status::Running
    }
}
