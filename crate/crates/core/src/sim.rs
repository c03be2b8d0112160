//! A populated metaverse: one identity provider and registered players,
//! each with a token, a virtual identity and a biometric source.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::biometric::{gen_template, BioTemplate};
use crate::chameleon::{keygen, ChameleonKeyPair};
use crate::error::Result;
use crate::group::{PairingGroup, SystemParams};
use crate::identity::{create_vid, sha256, AvatarInfo, Idp};
use crate::protocol::{Clock, Context, Credentials, Policy};

#[derive(Clone, Debug)]
pub struct Player<G: PairingGroup> {
    pub real_id: Vec<u8>,
    pub keypair: ChameleonKeyPair<G>,
    pub template: BioTemplate,
    pub creds: Credentials<G>,
}

pub struct World<G: PairingGroup> {
    pub idp: Idp<G>,
    pub players: Vec<Player<G>>,
    pub rng: ChaCha20Rng,
}

impl<G: PairingGroup> World<G> {
    /// `n` players; player `i` has real id `player-{i}` and biometric seed
    /// `seed * 1000 + i`.
    pub fn new(params: SystemParams<G>, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let idp = Idp::new(params, &mut rng);
        let mut world = World {
            idp,
            players: Vec::with_capacity(n),
            rng,
        };
        for i in 0..n {
            let template = gen_template(seed.wrapping_mul(1000).wrapping_add(i as u64));
            world.enroll(format!("player-{i}").as_bytes(), template)?;
        }
        Ok(world)
    }

    pub fn params(&self) -> &SystemParams<G> {
        self.idp.params()
    }

    /// Registers a new player and returns its index.
    pub fn enroll(&mut self, real_id: &[u8], template: BioTemplate) -> Result<usize> {
        let keypair = keygen(self.idp.params(), &mut self.rng);
        let mut anon = [0u8; 16];
        self.rng.fill_bytes(&mut anon);
        let anon_id = hex::encode(anon).into_bytes();
        let mit = self.idp.register(
            real_id,
            &anon_id,
            &template,
            keypair.public(),
            &mut self.rng,
        )?;
        let idx = self.players.len();
        let info = AvatarInfo {
            display_name: format!("avatar-{idx}"),
            appearance: sha256(&anon_id),
        };
        let vid = create_vid(self.idp.params(), keypair.secret(), &mit, &info.encode())?;
        self.players.push(Player {
            real_id: real_id.to_vec(),
            creds: Credentials {
                mit,
                sk: *keypair.secret(),
                vid,
                live: template.clone(),
            },
            keypair,
            template,
        });
        Ok(idx)
    }

    /// A session context reading this world's ledger.
    pub fn context<'a>(&'a self, clock: &'a dyn Clock, policy: Policy) -> Context<'a, G> {
        Context {
            params: self.idp.params(),
            idp_key: self.idp.verifying_key(),
            ledger: self.idp.ledger(),
            clock,
            policy,
        }
    }

    pub fn session_rng(&mut self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.rng.next_u64())
    }
}

/// Responses an adversary can build without the victim's secret key. The
/// victim's template is public inside its token, so each forgery carries a
/// feature that matches and the right watermark; only the check parameter
/// is wrong.
pub mod forge {
    use rand::RngCore;

    use crate::biometric::{capture, embed_watermark, BioFeature, CHALLENGE_BYTES};
    use crate::chameleon::{CheckParam, CollisionClaim};
    use crate::error::Result;
    use crate::group::{PairingGroup, SystemParams};
    use crate::identity::{sign_feature, MetaverseIdentityToken, PhysicalIdentity};

    fn marked_feature<G: PairingGroup>(
        mit: &MetaverseIdentityToken<G>,
        nonce: &[u8; CHALLENGE_BYTES],
        salt: &[u8],
        noise: f64,
        rng: &mut dyn RngCore,
    ) -> Result<BioFeature> {
        let f = capture(&mit.template(), noise, rng)?;
        embed_watermark(&f, nonce, salt)
    }

    /// A uniformly random check parameter.
    pub fn random_check<G: PairingGroup>(
        params: &SystemParams<G>,
        mit: &MetaverseIdentityToken<G>,
        nonce: &[u8; CHALLENGE_BYTES],
        noise: f64,
        rng: &mut dyn RngCore,
    ) -> Result<PhysicalIdentity<G>> {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let f = marked_feature(mit, nonce, &salt, noise, rng)?;
        let s = params.random_nonzero_scalar(rng);
        let r = CheckParam::new(params, params.group().g1_exp(params.g1(), &s))?;
        Ok(PhysicalIdentity {
            claim: CollisionClaim::new(f.code.encode(), r),
            salt: salt.to_vec(),
        })
    }

    /// Signed with the attacker's own key against the victim's hash.
    pub fn cross_key<G: PairingGroup>(
        params: &SystemParams<G>,
        attacker_sk: &G::Scalar,
        mit: &MetaverseIdentityToken<G>,
        nonce: &[u8; CHALLENGE_BYTES],
        noise: f64,
        rng: &mut dyn RngCore,
    ) -> Result<PhysicalIdentity<G>> {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let f = marked_feature(mit, nonce, &salt, noise, rng)?;
        sign_feature(params, attacker_sk, mit, &f, &salt)
    }

    /// Rewrites the watermark of a genuine, previously accepted response to
    /// carry `nonce` and keeps its check parameter.
    pub fn splice<G: PairingGroup>(
        old: &PhysicalIdentity<G>,
        nonce: &[u8; CHALLENGE_BYTES],
    ) -> Result<PhysicalIdentity<G>> {
        let mut f = old.feature()?;
        f.watermark_present = false;
        let f = embed_watermark(&f, nonce, &old.salt)?;
        Ok(PhysicalIdentity {
            claim: CollisionClaim::new(f.code.encode(), old.claim.check),
            salt: old.salt.clone(),
        })
    }

    /// The same token with one byte of its anonymous identity changed.
    pub fn tamper_mit<G: PairingGroup>(
        mit: &MetaverseIdentityToken<G>,
    ) -> MetaverseIdentityToken<G> {
        let mut t = mit.clone();
        t.anon_id[0] ^= 0x01;
        t
    }
}
