//! Virtual-physical tracing: the identity provider re-runs the verifier
//! pipeline on a retained bundle and, if every check passes, discloses the
//! real identity registered for the token.

use std::fmt;

use crate::biometric::{self, CHALLENGE_BYTES};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::group::{PairingGroup, SystemParams};
use crate::identity::{
    sha256, Idp, IdpVerifyingKey, LedgerRead, MetaverseIdentityToken, PhysicalIdentity, Registry,
    VirtualIdentity,
};
use crate::protocol::Retained;

const BUNDLE_MAGIC: &[u8; 4] = b"TRCE";
const BUNDLE_VERSION: u8 = 1;

/// A whistleblower's submission. The watermark salt travels inside `pid`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRequest<G: PairingGroup> {
    pub mit: MetaverseIdentityToken<G>,
    pub vid: VirtualIdentity<G>,
    pub pid: PhysicalIdentity<G>,
    pub challenge: [u8; CHALLENGE_BYTES],
    pub reporter: String,
}

impl<G: PairingGroup> TraceRequest<G> {
    pub fn from_retained(r: &Retained<G>, reporter: impl Into<String>) -> Self {
        TraceRequest {
            mit: r.mit.clone(),
            vid: r.vid.clone(),
            pid: r.pid.clone(),
            challenge: r.nonce,
            reporter: reporter.into(),
        }
    }

    /// `len:u32 || "TRCE" || version || mit || vid || pid || challenge || reporter`.
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(BUNDLE_MAGIC).u8(BUNDLE_VERSION);
        w.bytes(&self.mit.to_bytes(params));
        self.vid.encode(params, &mut w);
        self.pid.encode(params, &mut w);
        w.fixed(&self.challenge).bytes(self.reporter.as_bytes());
        let body = w.finish();
        let mut out = (body.len() as u32).to_be_bytes().to_vec();
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(params: &SystemParams<G>, b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        if r.u32()? as usize != r.remaining() {
            return Err(Error::Encoding("bundle length"));
        }
        if r.fixed(4)? != BUNDLE_MAGIC || r.u8()? != BUNDLE_VERSION {
            return Err(Error::Encoding("bundle header"));
        }
        let mit = MetaverseIdentityToken::from_bytes(params, r.bytes()?)?;
        let vid = VirtualIdentity::decode(params, &mut r)?;
        let pid = PhysicalIdentity::decode(params, &mut r)?;
        let challenge = r.array()?;
        let reporter = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| Error::Encoding("reporter label"))?;
        r.finish()?;
        Ok(TraceRequest {
            mit,
            vid,
            pid,
            challenge,
            reporter,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceReason {
    Disclosed,
    BadMit,
    BadVid,
    BadPid,
    BadFreshness,
    BadBiometric,
    Unregistered,
}

impl fmt::Display for TraceReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceReason::Disclosed => "Disclosed",
            TraceReason::BadMit => "BadMIT",
            TraceReason::BadVid => "BadVID",
            TraceReason::BadPid => "BadPID",
            TraceReason::BadFreshness => "BadFreshness",
            TraceReason::BadBiometric => "BadBiometric",
            TraceReason::Unregistered => "Unregistered",
        })
    }
}

/// `disclosed` is present exactly when `reason` is `Disclosed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceVerdict {
    disclosed: Option<Vec<u8>>,
    reason: TraceReason,
}

impl TraceVerdict {
    pub fn disclosed(real_id: Vec<u8>) -> Self {
        TraceVerdict {
            disclosed: Some(real_id),
            reason: TraceReason::Disclosed,
        }
    }

    /// # Panics
    /// If `reason` is `Disclosed`.
    pub fn refused(reason: TraceReason) -> Self {
        assert_ne!(reason, TraceReason::Disclosed, "disclosure needs a real id");
        TraceVerdict {
            disclosed: None,
            reason,
        }
    }

    pub fn reason(&self) -> TraceReason {
        self.reason
    }

    pub fn real_id(&self) -> Option<&[u8]> {
        self.disclosed.as_deref()
    }
}

/// Read-only view of what the provider needs to trace.
pub struct Tracer<'a, G: PairingGroup> {
    pub params: &'a SystemParams<G>,
    pub idp_key: IdpVerifyingKey<G>,
    pub ledger: &'a dyn LedgerRead,
    pub registry: &'a Registry,
    pub threshold: f64,
}

impl<'a, G: PairingGroup> Tracer<'a, G> {
    pub fn new(idp: &'a Idp<G>) -> Self {
        Tracer {
            params: idp.params(),
            idp_key: idp.verifying_key(),
            ledger: idp.ledger(),
            registry: idp.registry(),
            threshold: biometric::DEFAULT_THRESHOLD,
        }
    }

    pub fn trace(&self, req: &TraceRequest<G>) -> TraceVerdict {
        match self.check(req) {
            Ok(real_id) => TraceVerdict::disclosed(real_id),
            Err(reason) => TraceVerdict::refused(reason),
        }
    }

    fn check(&self, req: &TraceRequest<G>) -> std::result::Result<Vec<u8>, TraceReason> {
        let params = self.params;
        let mit_bytes = req.mit.to_bytes(params);
        let digest = sha256(&mit_bytes);
        let listed = self.ledger.fetch(&digest).is_some_and(|b| b == mit_bytes);
        if !listed || !req.mit.signature_valid(params, &self.idp_key) {
            return Err(TraceReason::BadMit);
        }
        if !req.mit.accepts(params, &req.vid.claim) {
            return Err(TraceReason::BadVid);
        }
        let feature = req.pid.feature().map_err(|_| TraceReason::BadPid)?;
        let extracted = biometric::extract_watermark(&feature, &req.pid.salt)
            .map_err(|_| TraceReason::BadPid)?;
        if extracted != req.challenge {
            return Err(TraceReason::BadFreshness);
        }
        if !biometric::matches(&feature, &req.mit.template(), self.threshold) {
            return Err(TraceReason::BadBiometric);
        }
        if !req.mit.accepts(params, &req.pid.claim) {
            return Err(TraceReason::BadPid);
        }
        self.registry
            .lookup(&digest)
            .map(<[u8]>::to_vec)
            .ok_or(TraceReason::Unregistered)
    }
}

pub fn trace<G: PairingGroup>(idp: &Idp<G>, request: &TraceRequest<G>) -> TraceVerdict {
    Tracer::new(idp).trace(request)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{setup, toy_setup, Bls12381, Toy};
    use crate::protocol::{run_lockstep, Policy, Prover, SystemClock, Verifier};
    use crate::sim::{forge, World};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn accepted_bundle<G: PairingGroup>(w: &World<G>, who: usize, seed: u64) -> TraceRequest<G> {
        let clock = SystemClock;
        let ctx = w.context(&clock, Policy::default());
        let mut p = Prover::new(
            ctx.clone(),
            w.players[who].creds.clone(),
            ChaCha20Rng::seed_from_u64(seed),
        );
        let mut v = Verifier::new(ctx, ChaCha20Rng::seed_from_u64(seed + 1));
        run_lockstep(&mut p, &mut v);
        let verdict = v.verdict();
        assert!(verdict.accepted);
        TraceRequest::from_retained(&verdict.retained.unwrap(), "witness")
    }

    #[test]
    fn accepted_session_discloses_the_registered_identity() {
        let w = World::<Bls12381>::new(setup(128).unwrap(), 3, 1).unwrap();
        for who in 0..3 {
            let req = accepted_bundle(&w, who, 10 * who as u64);
            let v = trace(&w.idp, &req);
            assert_eq!(v.reason(), TraceReason::Disclosed);
            assert_eq!(v.real_id(), Some(format!("player-{who}").as_bytes()));
        }
    }

    #[test]
    fn each_broken_field_maps_to_its_reason() {
        let w = World::<Bls12381>::new(setup(128).unwrap(), 2, 2).unwrap();
        let params = w.params();
        let good = accepted_bundle(&w, 0, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let reason = |r: &TraceRequest<Bls12381>| trace(&w.idp, r).reason();

        let mut r = good.clone();
        r.mit = forge::tamper_mit(&r.mit);
        assert_eq!(reason(&r), TraceReason::BadMit);

        let mut r = good.clone();
        r.vid = w.players[1].creds.vid.clone();
        assert_eq!(reason(&r), TraceReason::BadVid);

        let mut r = good.clone();
        r.challenge[0] ^= 1;
        assert_eq!(reason(&r), TraceReason::BadFreshness);

        let mut r = good.clone();
        r.pid = forge::random_check(params, &good.mit, &good.challenge, 0.1, &mut rng).unwrap();
        assert_eq!(reason(&r), TraceReason::BadPid);

        let mut r = good.clone();
        r.challenge = [0x5a; 16];
        r.pid = forge::splice(&good.pid, &r.challenge).unwrap();
        assert_eq!(reason(&r), TraceReason::BadPid);

        let mut r = good.clone();
        r.pid = forge::cross_key(
            params,
            &w.players[1].creds.sk,
            &good.mit,
            &good.challenge,
            0.1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(reason(&r), TraceReason::BadPid);

        // Another person's feature, correctly signed by the token holder.
        let other = w.players[1].template.clone();
        let f = biometric::capture(&other, 0.1, &mut rng).unwrap();
        let f = biometric::embed_watermark(&f, &good.challenge, &good.pid.salt).unwrap();
        let mut r = good.clone();
        r.pid = crate::identity::sign_feature(
            params,
            &w.players[0].creds.sk,
            &good.mit,
            &f,
            &good.pid.salt,
        )
        .unwrap();
        assert_eq!(reason(&r), TraceReason::BadBiometric);

        let empty = Registry::default();
        let tracer = Tracer {
            registry: &empty,
            ..Tracer::new(&w.idp)
        };
        let v = tracer.trace(&good);
        assert_eq!(v.reason(), TraceReason::Unregistered);
        assert_eq!(v.real_id(), None);
    }

    #[test]
    fn bundle_round_trips_and_rejects_trailing_bytes() {
        let w = World::<Toy>::new(toy_setup((1 << 61) - 1).unwrap(), 1, 3).unwrap();
        let req = accepted_bundle(&w, 0, 1);
        let bytes = req.to_bytes(w.params());
        assert_eq!(TraceRequest::from_bytes(w.params(), &bytes).unwrap(), req);
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(TraceRequest::from_bytes(w.params(), &longer).is_err());
        assert!(TraceRequest::from_bytes(w.params(), &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    #[should_panic(expected = "disclosure needs a real id")]
    fn refused_verdict_cannot_claim_disclosure() {
        let _ = TraceVerdict::refused(TraceReason::Disclosed);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn forgeries_without_the_key_are_never_disclosed(seed in any::<u64>(), kind in 0u8..3) {
            let w = World::<Toy>::new(toy_setup((1 << 61) - 1).unwrap(), 2, 4).unwrap();
            let params = w.params();
            let good = accepted_bundle(&w, 0, 7);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut nonce = [0u8; 16];
            rand::RngCore::fill_bytes(&mut rng, &mut nonce);
            let mut r = good.clone();
            r.challenge = nonce;
            r.pid = match kind {
                0 => forge::random_check(params, &good.mit, &nonce, 0.1, &mut rng).unwrap(),
                1 => forge::splice(&good.pid, &nonce).unwrap(),
                _ => forge::cross_key(params, &w.players[1].creds.sk, &good.mit, &nonce, 0.1, &mut rng).unwrap(),
            };
            prop_assert_ne!(trace(&w.idp, &r).reason(), TraceReason::Disclosed);
        }
    }
}
