//! One-party authentication: a prover convinces a verifier that its virtual
//! and physical identities belong to the same token.

use std::time::Instant;

use rand_chacha::ChaCha20Rng;

use super::{
    check_claim, fresh_salt, fresh_session_id, AbortReason, Body, Context, Core, CostPhase,
    Credentials, Freshness, Incoming, Nonce, PhaseCosts, Retained, Session, Status, Transcript,
    Verdict,
};
use crate::biometric::Challenge;
use crate::group::{measure, OpCounter, PairingGroup};
use crate::identity::{self, MetaverseIdentityToken, VirtualIdentity};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProverPhase {
    Start,
    AwaitChallenge,
    AwaitVerdict,
    Established,
    Aborted,
}

pub struct Prover<'a, G: PairingGroup> {
    core: Core<'a, G>,
    creds: Credentials<G>,
    phase: ProverPhase,
}

impl<'a, G: PairingGroup> Prover<'a, G> {
    pub fn new(ctx: Context<'a, G>, creds: Credentials<G>, rng: ChaCha20Rng) -> Self {
        Prover {
            core: Core::new(ctx, rng),
            creds,
            phase: ProverPhase::Start,
        }
    }

    pub fn phase(&self) -> ProverPhase {
        match self.core.status {
            Status::Aborted { .. } => ProverPhase::Aborted,
            _ => self.phase,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.core.transcript
    }

    pub fn costs(&self) -> OpCounter {
        self.core.costs.total()
    }

    pub fn verdict(&self) -> Verdict<G> {
        self.core.verdict(None, None)
    }

    fn respond(&mut self, nonce: Nonce) -> Option<Vec<u8>> {
        let Core { ctx, rng, .. } = &mut self.core;
        let salt = fresh_salt(rng);
        let pid = identity::create_pid(
            ctx.params,
            &self.creds.sk,
            &self.creds.mit,
            &self.creds.live,
            &nonce,
            &salt,
            ctx.policy.capture_noise,
            rng,
        );
        match pid {
            Ok(pid) => {
                self.phase = ProverPhase::AwaitVerdict;
                self.core.status = Status::Running;
                Some(self.core.emit(Body::Response { pid }))
            }
            Err(_) => self.core.abort(AbortReason::Malformed),
        }
    }
}

impl<G: PairingGroup> Session for Prover<'_, G> {
    fn start(&mut self) -> Option<Vec<u8>> {
        if self.phase != ProverPhase::Start {
            return None;
        }
        self.core.session_id = Some(fresh_session_id(&mut self.core.rng));
        self.phase = ProverPhase::AwaitChallenge;
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
        let (reply, cost) = measure(|| match (self.phase, body) {
            (ProverPhase::AwaitChallenge | ProverPhase::Established, Body::Challenge { nonce }) => {
                self.respond(nonce)
            }
            (ProverPhase::AwaitVerdict, Body::Accept) => {
                self.phase = ProverPhase::Established;
                self.core.status = Status::Established;
                None
            }
            _ => self.core.abort(AbortReason::OutOfPhase),
        });
        self.core.costs.add(CostPhase::Round2, cost);
        reply
    }

    fn is_done(&self) -> bool {
        self.core.status != Status::Running
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifierPhase {
    AwaitClaim,
    AwaitResponse,
    Established,
    Aborted,
}

pub struct Verifier<'a, G: PairingGroup> {
    core: Core<'a, G>,
    phase: VerifierPhase,
    freshness: Freshness,
    peer: Option<(MetaverseIdentityToken<G>, VirtualIdentity<G>)>,
    retained: Option<Retained<G>>,
    accepted_rounds: usize,
}

impl<'a, G: PairingGroup> Verifier<'a, G> {
    pub fn new(ctx: Context<'a, G>, rng: ChaCha20Rng) -> Self {
        Verifier {
            core: Core::new(ctx, rng),
            phase: VerifierPhase::AwaitClaim,
            freshness: Freshness::default(),
            peer: None,
            retained: None,
            accepted_rounds: 0,
        }
    }

    pub fn phase(&self) -> VerifierPhase {
        match self.core.status {
            Status::Aborted { .. } => VerifierPhase::Aborted,
            _ => self.phase,
        }
    }

    pub fn pending_challenge(&self) -> Option<&Challenge> {
        self.freshness.pending()
    }

    pub fn challenge_deadline(&self) -> Option<Instant> {
        self.freshness
            .pending()
            .map(|c| c.issued_at + self.core.ctx.policy.challenge_window)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.core.transcript
    }

    pub fn costs(&self) -> PhaseCosts {
        self.core.costs
    }

    /// Number of responses accepted so far, re-challenges included.
    pub fn accepted_rounds(&self) -> usize {
        self.accepted_rounds
    }

    pub fn verdict(&self) -> Verdict<G> {
        self.core.verdict(self.retained.clone(), None)
    }

    /// Issues a new challenge inside an established session.
    pub fn rechallenge(&mut self) -> Option<Vec<u8>> {
        if self.phase() != VerifierPhase::Established {
            return None;
        }
        let now = self.core.ctx.clock.now();
        let nonce = self.freshness.issue(&mut self.core.rng, now);
        self.phase = VerifierPhase::AwaitResponse;
        self.core.status = Status::Running;
        Some(self.core.emit(Body::Challenge { nonce }))
    }

    fn handle(&mut self, body: Body<G>) -> Option<Vec<u8>> {
        match (self.phase, body) {
            (VerifierPhase::AwaitClaim, Body::Claim { mit, vid }) => {
                if let Err(r) = check_claim(&self.core.ctx, &mit, &vid) {
                    return self.core.abort(r);
                }
                self.peer = Some((mit, vid));
                let now = self.core.ctx.clock.now();
                let nonce = self.freshness.issue(&mut self.core.rng, now);
                self.phase = VerifierPhase::AwaitResponse;
                Some(self.core.emit(Body::Challenge { nonce }))
            }
            (VerifierPhase::AwaitResponse, Body::Response { pid }) => {
                let (mit, vid) = self.peer.clone().expect("claim precedes response");
                match self.freshness.check_response(&self.core.ctx, &mit, &pid) {
                    Err(r) => self.core.abort(r),
                    Ok(nonce) => {
                        self.retained = Some(Retained {
                            mit,
                            vid,
                            pid,
                            nonce,
                        });
                        self.accepted_rounds += 1;
                        self.phase = VerifierPhase::Established;
                        self.core.status = Status::Established;
                        Some(self.core.emit(Body::Accept))
                    }
                }
            }
            _ => self.core.abort(AbortReason::OutOfPhase),
        }
    }
}

impl<G: PairingGroup> Session for Verifier<'_, G> {
    fn start(&mut self) -> Option<Vec<u8>> {
        None
    }

    fn on_frame(&mut self, frame: &[u8]) -> Option<Vec<u8>> {
        let body = match self.core.receive(frame) {
            Incoming::Message(b) => *b,
            Incoming::Handled(reply) => return reply,
        };
        let phase = match self.phase {
            VerifierPhase::AwaitClaim => CostPhase::Round1,
            _ => CostPhase::Round2,
        };
        let (reply, cost) = measure(|| self.handle(body));
        self.core.costs.add(phase, cost);
        reply
    }

    fn is_done(&self) -> bool {
        self.core.status != Status::Running
    }
}
