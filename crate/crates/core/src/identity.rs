//! Avatar identity model: identity tokens issued by the identity provider,
//! virtual identities `(M_a, R_a)` and physical identities `(M_a', R_a')`,
//! plus the provider's registry and the public append-only ledger.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::RngCore;
use sha2::{Digest, Sha256, Sha512};

use crate::biometric::{self, BioFeature, BioTemplate, IrisCode, CHALLENGE_BYTES};
use crate::chameleon::{self, ChameleonHash, CheckParam, CollisionClaim, PublicKey};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::group::{PairingGroup, SystemParams, SCALAR_LEN};

pub type Digest32 = [u8; 32];

pub fn sha256(data: &[u8]) -> Digest32 {
    Sha256::digest(data).into()
}

/// Schnorr signatures over G1 with deterministic nonces, used by the
/// identity provider to sign tokens. Arithmetic is uncounted: it is not part
/// of the chameleon cost model.
pub mod idp_sig {
    use super::*;

    const NONCE_DST: &[u8] = b"CHAMAUTH-IDP-NONCE-v1";
    const CHALLENGE_DST: &[u8] = b"CHAMAUTH-IDP-CHAL-v1";

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub struct VerifyingKey<G: PairingGroup>(pub G::G1);

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub struct SigningKey<G: PairingGroup> {
        sk: G::Scalar,
        vk: VerifyingKey<G>,
    }

    fn wide<G: PairingGroup>(params: &SystemParams<G>, parts: &[&[u8]]) -> G::Scalar {
        let mut h = Sha512::new();
        for p in parts {
            h.update((p.len() as u32).to_be_bytes());
            h.update(p);
        }
        params.group().scalar_from_wide(&h.finalize().into())
    }

    impl<G: PairingGroup> SigningKey<G> {
        pub fn generate(params: &SystemParams<G>, rng: &mut dyn RngCore) -> Self {
            Self::from_scalar(params, params.random_nonzero_scalar(rng)).unwrap()
        }

        pub fn from_scalar(params: &SystemParams<G>, sk: G::Scalar) -> Result<Self> {
            if params.group().scalar_is_zero(&sk) {
                return Err(Error::ZeroScalar);
            }
            let vk = VerifyingKey(params.group().g1_exp(params.g1(), &sk));
            Ok(SigningKey { sk, vk })
        }

        pub fn scalar(&self) -> &G::Scalar {
            &self.sk
        }

        pub fn verifying_key(&self) -> VerifyingKey<G> {
            self.vk
        }

        /// Signature bytes: `R || s` with `g^s = R * vk^c`.
        pub fn sign(&self, params: &SystemParams<G>, msg: &[u8]) -> Vec<u8> {
            let g = params.group();
            let sk_bytes = params.encode_scalar(&self.sk);
            let mut k = wide(params, &[NONCE_DST, &sk_bytes, msg]);
            if g.scalar_is_zero(&k) {
                k = g.scalar_from_u64(1);
            }
            let big_r = g.g1_exp(params.g1(), &k);
            let r_bytes = params.encode_g1(&big_r);
            let c = wide(
                params,
                &[CHALLENGE_DST, &r_bytes, &params.encode_g1(&self.vk.0), msg],
            );
            let s = g.scalar_add(&k, &g.scalar_mul(&c, &self.sk));
            let mut out = r_bytes;
            out.extend_from_slice(&params.encode_scalar(&s));
            out
        }
    }

    impl<G: PairingGroup> VerifyingKey<G> {
        pub fn verify(&self, params: &SystemParams<G>, msg: &[u8], sig: &[u8]) -> bool {
            let g = params.group();
            let n1 = g.g1_len();
            if sig.len() != n1 + SCALAR_LEN {
                return false;
            }
            let (Ok(big_r), Ok(s)) = (
                params.decode_g1(&sig[..n1]),
                params.decode_scalar(&sig[n1..]),
            ) else {
                return false;
            };
            let c = wide(
                params,
                &[CHALLENGE_DST, &sig[..n1], &params.encode_g1(&self.0), msg],
            );
            g.g1_exp(params.g1(), &s) == g.g1_mul(&big_r, &g.g1_exp(&self.0, &c))
        }
    }
}

pub use idp_sig::{SigningKey as IdpSigningKey, VerifyingKey as IdpVerifyingKey};

/// Metaverse identity token `(T, y, h, M, R)` signed by the identity provider.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaverseIdentityToken<G: PairingGroup> {
    pub template: IrisCode,
    pub pk: PublicKey<G>,
    pub h: ChameleonHash<G>,
    pub anon_id: Vec<u8>,
    pub check: CheckParam<G>,
    pub idp_sig: Vec<u8>,
}

impl<G: PairingGroup> MetaverseIdentityToken<G> {
    /// Signed bytes: `T || y1 || y2 || h || len(M) || M || R`.
    pub fn signed_body(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(&self.template.encode())
            .fixed(&self.pk.to_bytes(params))
            .fixed(&self.h.to_bytes(params))
            .bytes(&self.anon_id)
            .fixed(&self.check.to_bytes(params));
        w.finish()
    }

    /// Signed body followed by the length-prefixed signature.
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(&self.signed_body(params)).bytes(&self.idp_sig);
        w.finish()
    }

    pub fn from_bytes(params: &SystemParams<G>, b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let mit = Self::read(params, &mut r)?;
        r.finish()?;
        Ok(mit)
    }

    pub(crate) fn read(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self> {
        let g = params.group();
        let template = IrisCode::read(r)?;
        let pk = PublicKey::from_bytes(params, r.fixed(PublicKey::encoded_len(params))?)?;
        let h = ChameleonHash::from_bytes(params, r.fixed(g.g1_len())?)?;
        let anon_id = r.bytes()?.to_vec();
        let check = CheckParam::from_bytes(params, r.fixed(g.g1_len())?)?;
        let idp_sig = r.bytes()?.to_vec();
        Ok(MetaverseIdentityToken {
            template,
            pk,
            h,
            anon_id,
            check,
            idp_sig,
        })
    }

    /// Ledger key: SHA-256 of the full encoding.
    pub fn digest(&self, params: &SystemParams<G>) -> Digest32 {
        sha256(&self.to_bytes(params))
    }

    pub fn template(&self) -> BioTemplate {
        BioTemplate::new(self.template, "mit")
    }

    pub fn original_claim(&self) -> CollisionClaim<G> {
        CollisionClaim::new(self.anon_id.clone(), self.check)
    }

    pub fn signature_valid(&self, params: &SystemParams<G>, vk: &IdpVerifyingKey<G>) -> bool {
        vk.verify(params, &self.signed_body(params), &self.idp_sig)
    }

    /// `check(y, h, M, R)`.
    pub fn hash_valid(&self, params: &SystemParams<G>) -> bool {
        chameleon::check(params, &self.pk, &self.h, &self.anon_id, &self.check)
    }

    /// `verify(y, h, (M, R), claim)`: the claim collides with this token.
    pub fn accepts(&self, params: &SystemParams<G>, claim: &CollisionClaim<G>) -> bool {
        chameleon::verify(params, &self.pk, &self.h, &self.original_claim(), claim)
    }
}

/// Display name and appearance digest of an avatar, encoded as `M_a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvatarInfo {
    pub display_name: String,
    pub appearance: Digest32,
}

impl AvatarInfo {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(b"AVTR")
            .bytes(self.display_name.as_bytes())
            .fixed(&self.appearance);
        w.finish()
    }
}

/// `VID = (M_a, R_a)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VirtualIdentity<G: PairingGroup> {
    pub claim: CollisionClaim<G>,
}

impl<G: PairingGroup> VirtualIdentity<G> {
    pub fn encode(&self, params: &SystemParams<G>, w: &mut Writer) {
        self.claim.encode(params, w);
    }

    pub fn decode(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self> {
        Ok(VirtualIdentity {
            claim: CollisionClaim::decode(params, r)?,
        })
    }
}

/// `PID = (M_a', R_a')` where `M_a'` is the encoded watermarked feature,
/// plus the watermark salt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhysicalIdentity<G: PairingGroup> {
    pub claim: CollisionClaim<G>,
    pub salt: Vec<u8>,
}

impl<G: PairingGroup> PhysicalIdentity<G> {
    pub fn feature(&self) -> Result<BioFeature> {
        Ok(BioFeature {
            code: IrisCode::decode(&self.claim.message)?,
            watermark_present: true,
        })
    }

    pub fn encode(&self, params: &SystemParams<G>, w: &mut Writer) {
        self.claim.encode(params, w);
        w.bytes(&self.salt);
    }

    pub fn decode(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self> {
        let claim = CollisionClaim::decode(params, r)?;
        let salt = r.bytes()?.to_vec();
        Ok(PhysicalIdentity { claim, salt })
    }
}

/// `R_a = sign(sk, h, M_a)`. The key is not compared with the token: a
/// mismatched key yields a virtual identity that fails verification.
pub fn create_vid<G: PairingGroup>(
    params: &SystemParams<G>,
    sk: &G::Scalar,
    mit: &MetaverseIdentityToken<G>,
    avatar_info: &[u8],
) -> Result<VirtualIdentity<G>> {
    let r = chameleon::sign(params, sk, &mit.h, avatar_info)?;
    Ok(VirtualIdentity {
        claim: CollisionClaim::new(avatar_info.to_vec(), r),
    })
}

/// Signs an already watermarked feature.
pub fn sign_feature<G: PairingGroup>(
    params: &SystemParams<G>,
    sk: &G::Scalar,
    mit: &MetaverseIdentityToken<G>,
    feature: &BioFeature,
    salt: &[u8],
) -> Result<PhysicalIdentity<G>> {
    let message = feature.code.encode();
    let r = chameleon::sign(params, sk, &mit.h, &message)?;
    Ok(PhysicalIdentity {
        claim: CollisionClaim::new(message, r),
        salt: salt.to_vec(),
    })
}

/// Captures a feature from `live`, watermarks `nonce` into it and signs it.
#[allow(clippy::too_many_arguments)]
pub fn create_pid<G: PairingGroup>(
    params: &SystemParams<G>,
    sk: &G::Scalar,
    mit: &MetaverseIdentityToken<G>,
    live: &BioTemplate,
    nonce: &[u8; CHALLENGE_BYTES],
    salt: &[u8],
    capture_noise: f64,
    rng: &mut dyn RngCore,
) -> Result<PhysicalIdentity<G>> {
    let feature = biometric::capture(live, capture_noise, rng)?;
    let marked = biometric::embed_watermark(&feature, nonce, salt)?;
    sign_feature(params, sk, mit, &marked, salt)
}

/// One hash-chained ledger record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub index: u64,
    pub prev_digest: Digest32,
    pub payload_digest: Digest32,
    pub payload: Vec<u8>,
}

impl LedgerEntry {
    pub fn digest(&self) -> Digest32 {
        Sha256::new()
            .chain_update(b"CHAMAUTH-LEDGER-v1")
            .chain_update(self.index.to_be_bytes())
            .chain_update(self.prev_digest)
            .chain_update(self.payload_digest)
            .finalize()
            .into()
    }

    /// `len || index || prev || payload_digest || payload`, `len` counting
    /// everything after itself.
    fn to_record(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32((8 + 32 + 32 + self.payload.len()) as u32)
            .u64(self.index)
            .fixed(&self.prev_digest)
            .fixed(&self.payload_digest)
            .fixed(&self.payload);
        w.finish()
    }
}

/// Read-only ledger access, the only shared state an authentication run
/// touches.
pub trait LedgerRead {
    fn fetch(&self, payload_digest: &Digest32) -> Option<Vec<u8>>;
}

/// Append-only, hash-chained log, optionally mirrored to a file.
#[derive(Debug, Default)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
    by_digest: HashMap<Digest32, u64>,
    file: Option<File>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads and verifies an existing file, or starts an empty one.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        let mut ledger = Ledger::new();
        let mut r = Reader::new(&raw);
        while r.remaining() > 0 {
            let rec = r.bytes()?;
            let mut er = Reader::new(rec);
            let index = er.u64()?;
            let prev_digest = er.array()?;
            let payload_digest = er.array()?;
            let payload = er.fixed(er.remaining())?.to_vec();
            ledger.push(LedgerEntry {
                index,
                prev_digest,
                payload_digest,
                payload,
            });
        }
        ledger.verify_chain()?;
        ledger.file = Some(file);
        Ok(ledger)
    }

    fn push(&mut self, entry: LedgerEntry) {
        self.by_digest.insert(entry.payload_digest, entry.index);
        self.entries.push(entry);
    }

    pub fn append(&mut self, payload: &[u8]) -> Result<u64> {
        let index = self.entries.len() as u64;
        let prev_digest = self.entries.last().map_or([0u8; 32], LedgerEntry::digest);
        let entry = LedgerEntry {
            index,
            prev_digest,
            payload_digest: sha256(payload),
            payload: payload.to_vec(),
        };
        if let Some(f) = self.file.as_mut() {
            f.write_all(&entry.to_record())?;
            f.flush()?;
        }
        self.push(entry);
        Ok(index)
    }

    pub fn get(&self, index: u64) -> Result<&[u8]> {
        self.entries
            .get(index as usize)
            .map(|e| e.payload.as_slice())
            .ok_or(Error::UnknownEntry)
    }

    pub fn get_by_digest(&self, digest: &Digest32) -> Result<&[u8]> {
        let i = *self.by_digest.get(digest).ok_or(Error::UnknownEntry)?;
        self.get(i)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn verify_chain(&self) -> Result<()> {
        let mut prev = [0u8; 32];
        for (i, e) in self.entries.iter().enumerate() {
            if e.index != i as u64
                || e.prev_digest != prev
                || e.payload_digest != sha256(&e.payload)
            {
                return Err(Error::BrokenChain(i as u64));
            }
            prev = e.digest();
        }
        Ok(())
    }
}

impl LedgerRead for Ledger {
    fn fetch(&self, payload_digest: &Digest32) -> Option<Vec<u8>> {
        self.get_by_digest(payload_digest).ok().map(<[u8]>::to_vec)
    }
}

impl<L: LedgerRead + ?Sized> LedgerRead for &L {
    fn fetch(&self, d: &Digest32) -> Option<Vec<u8>> {
        (**self).fetch(d)
    }
}

impl<L: LedgerRead> LedgerRead for RwLock<L> {
    fn fetch(&self, d: &Digest32) -> Option<Vec<u8>> {
        self.read().ok()?.fetch(d)
    }
}

impl<L: LedgerRead + ?Sized> LedgerRead for Arc<L> {
    fn fetch(&self, d: &Digest32) -> Option<Vec<u8>> {
        (**self).fetch(d)
    }
}

/// The provider's private `(ID, MIT)` records, keyed by token digest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    records: HashMap<Digest32, Vec<u8>>,
}

impl Registry {
    pub fn insert(&mut self, mit_digest: Digest32, real_id: &[u8]) {
        self.records.insert(mit_digest, real_id.to_vec());
    }

    pub fn lookup(&self, mit_digest: &Digest32) -> Option<&[u8]> {
        self.records.get(mit_digest).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One `digest_hex<TAB>real_id_hex` line per record.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<_> = self
            .records
            .iter()
            .map(|(d, id)| format!("{}\t{}\n", hex::encode(d), hex::encode(id)))
            .collect();
        lines.sort();
        lines.concat()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut reg = Registry::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (d, id) = line
                .split_once('\t')
                .ok_or(Error::Encoding("registry line"))?;
            let d: Digest32 = hex::decode(d)
                .ok()
                .and_then(|v| v.try_into().ok())
                .ok_or(Error::Encoding("registry digest"))?;
            let id = hex::decode(id).map_err(|_| Error::Encoding("registry id"))?;
            reg.insert(d, &id);
        }
        Ok(reg)
    }
}

/// The identity provider: issues tokens, publishes them on the ledger and
/// keeps the registry used for tracing.
#[derive(Debug)]
pub struct Idp<G: PairingGroup> {
    params: SystemParams<G>,
    key: IdpSigningKey<G>,
    ledger: Ledger,
    registry: Registry,
    anon_ids: HashSet<Vec<u8>>,
}

impl<G: PairingGroup> Idp<G> {
    pub fn new(params: SystemParams<G>, rng: &mut dyn RngCore) -> Self {
        let key = IdpSigningKey::generate(&params, rng);
        Self::from_parts(params, key, Ledger::new(), Registry::default())
            .expect("empty ledger is consistent")
    }

    /// Rebuilds a provider from persisted state. Every token on the ledger
    /// must decode.
    pub fn from_parts(
        params: SystemParams<G>,
        key: IdpSigningKey<G>,
        ledger: Ledger,
        registry: Registry,
    ) -> Result<Self> {
        let mut anon_ids = HashSet::new();
        for e in ledger.entries() {
            let mit = MetaverseIdentityToken::from_bytes(&params, &e.payload)?;
            anon_ids.insert(mit.anon_id);
        }
        Ok(Idp {
            params,
            key,
            ledger,
            registry,
            anon_ids,
        })
    }

    pub fn params(&self) -> &SystemParams<G> {
        &self.params
    }

    pub fn signing_key(&self) -> &IdpSigningKey<G> {
        &self.key
    }

    pub fn verifying_key(&self) -> IdpVerifyingKey<G> {
        self.key.verifying_key()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Hashes `anon_id` under the player's key, signs the token, publishes
    /// it and records `(real_id, digest)`.
    pub fn register(
        &mut self,
        real_id: &[u8],
        anon_id: &[u8],
        template: &BioTemplate,
        pk: &PublicKey<G>,
        rng: &mut dyn RngCore,
    ) -> Result<MetaverseIdentityToken<G>> {
        if anon_id.is_empty() {
            return Err(Error::EmptyAnonymousId);
        }
        if self.anon_ids.contains(anon_id) {
            return Err(Error::DuplicateAnonymousId);
        }
        if !pk.is_consistent(&self.params) {
            return Err(Error::InvalidPublicKey);
        }
        let (h, check) = chameleon::hash(&self.params, pk, anon_id, rng);
        let mut mit = MetaverseIdentityToken {
            template: template.code,
            pk: *pk,
            h,
            anon_id: anon_id.to_vec(),
            check,
            idp_sig: Vec::new(),
        };
        mit.idp_sig = self.key.sign(&self.params, &mit.signed_body(&self.params));
        let bytes = mit.to_bytes(&self.params);
        self.ledger.append(&bytes)?;
        self.registry.insert(sha256(&bytes), real_id);
        self.anon_ids.insert(anon_id.to_vec());
        Ok(mit)
    }

    pub fn fetch_mit(&self, digest: &Digest32) -> Result<MetaverseIdentityToken<G>> {
        MetaverseIdentityToken::from_bytes(&self.params, self.ledger.get_by_digest(digest)?)
    }

    pub fn into_parts(self) -> (IdpSigningKey<G>, Ledger, Registry) {
        (self.key, self.ledger, self.registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chameleon::keygen;
    use crate::group::{setup, toy_setup, Bls12381, Toy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn curve_idp(seed: u64) -> (Idp<Bls12381>, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (Idp::new(setup(128).unwrap(), &mut rng), rng)
    }

    #[test]
    fn register_then_fetch_is_byte_identical() {
        let (mut idp, mut rng) = curve_idp(1);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let t = biometric::gen_template(1);
        let mit = idp
            .register(b"alice", b"anon-1", &t, kp.public(), &mut rng)
            .unwrap();
        let d = mit.digest(&p);
        assert_eq!(
            idp.ledger().get_by_digest(&d).unwrap(),
            mit.to_bytes(&p).as_slice()
        );
        assert_eq!(idp.fetch_mit(&d).unwrap(), mit);
        assert!(mit.hash_valid(&p));
        assert!(mit.signature_valid(&p, &idp.verifying_key()));
        assert_eq!(idp.registry().lookup(&d), Some(&b"alice"[..]));
    }

    #[test]
    fn tampered_anon_id_breaks_signature() {
        let (mut idp, mut rng) = curve_idp(2);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let mit = idp
            .register(
                b"bob",
                b"anon-2",
                &biometric::gen_template(2),
                kp.public(),
                &mut rng,
            )
            .unwrap();
        let mut bad = mit.clone();
        bad.anon_id[0] ^= 1;
        assert!(!bad.signature_valid(&p, &idp.verifying_key()));
        let mut bad = mit.clone();
        bad.template = biometric::gen_template(3).code;
        assert!(!bad.signature_valid(&p, &idp.verifying_key()));
        // a different provider's key
        let other = IdpSigningKey::generate(&p, &mut rng);
        assert!(!mit.signature_valid(&p, &other.verifying_key()));
    }

    #[test]
    fn registration_errors() {
        let (mut idp, mut rng) = curve_idp(3);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let t = biometric::gen_template(4);
        assert!(matches!(
            idp.register(b"c", b"", &t, kp.public(), &mut rng),
            Err(Error::EmptyAnonymousId)
        ));
        idp.register(b"c", b"dup", &t, kp.public(), &mut rng)
            .unwrap();
        assert!(matches!(
            idp.register(b"d", b"dup", &t, kp.public(), &mut rng),
            Err(Error::DuplicateAnonymousId)
        ));
        let other = keygen(&p, &mut rng);
        let mixed = PublicKey {
            g1: kp.public().g1,
            g2: other.public().g2,
        };
        assert!(matches!(
            idp.register(b"e", b"fresh", &t, &mixed, &mut rng),
            Err(Error::InvalidPublicKey)
        ));
    }

    #[test]
    fn vid_created_with_right_and_wrong_key() {
        let (mut idp, mut rng) = curve_idp(4);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let mit = idp
            .register(
                b"f",
                b"anon-f",
                &biometric::gen_template(5),
                kp.public(),
                &mut rng,
            )
            .unwrap();
        let info = AvatarInfo {
            display_name: "knight".into(),
            appearance: [1; 32],
        }
        .encode();
        let vid = create_vid(&p, kp.secret(), &mit, &info).unwrap();
        assert!(mit.accepts(&p, &vid.claim));
        let wrong = keygen(&p, &mut rng);
        let bad = create_vid(&p, wrong.secret(), &mit, &info).unwrap();
        assert!(!mit.accepts(&p, &bad.claim));
    }

    #[test]
    fn toy_wrong_key_vid_fixture() {
        // q = 13, x = 3, h = 10, m' = 7: x = 5 gives R' = 2, which fails.
        let p = toy_setup(13).unwrap();
        let kp = crate::chameleon::keypair_from_secret(&p, 3).unwrap();
        let h = ChameleonHash::<Toy>::new(&p, crate::group::ToyElement(10)).unwrap();
        let m = crate::group::ToyElement(7);
        let r = crate::chameleon::sign_point(&p, &5, &h, &m).unwrap();
        assert!(!crate::chameleon::check_point(&p, kp.public(), &h, &m, &r));
    }

    #[test]
    fn fifty_identities_under_one_token() {
        let (mut idp, mut rng) = curve_idp(5);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let t = biometric::gen_template(6);
        let mit = idp
            .register(b"g", b"anon-g", &t, kp.public(), &mut rng)
            .unwrap();
        let before = mit.to_bytes(&p);
        for i in 0..25 {
            let vid = create_vid(&p, kp.secret(), &mit, format!("avatar-{i}").as_bytes()).unwrap();
            assert!(mit.accepts(&p, &vid.claim));
            let nonce: [u8; 16] = rng.gen();
            let salt: [u8; 16] = rng.gen();
            let pid = create_pid(&p, kp.secret(), &mit, &t, &nonce, &salt, 0.1, &mut rng).unwrap();
            assert!(mit.accepts(&p, &pid.claim));
        }
        assert_eq!(mit.to_bytes(&p), before);
    }

    #[test]
    fn pid_pipeline_and_stale_or_spliced_features() {
        let (mut idp, mut rng) = curve_idp(6);
        let p = idp.params().clone();
        let kp = keygen(&p, &mut rng);
        let t = biometric::gen_template(7);
        let mit = idp
            .register(b"h", b"anon-h", &t, kp.public(), &mut rng)
            .unwrap();
        let old_nonce = [1u8; 16];
        let now_nonce = [2u8; 16];
        let salt = [9u8; 16];
        let pid = create_pid(&p, kp.secret(), &mit, &t, &old_nonce, &salt, 0.1, &mut rng).unwrap();
        let f = pid.feature().unwrap();
        assert!(mit.accepts(&p, &pid.claim));
        assert!(biometric::matches(&f, &mit.template(), 0.32));
        assert_eq!(biometric::extract_watermark(&f, &salt).unwrap(), old_nonce);
        assert_ne!(biometric::extract_watermark(&f, &salt).unwrap(), now_nonce);

        // Re-watermark the old feature with the fresh nonce, keep the old R'.
        let mut bare = f.clone();
        bare.watermark_present = false;
        let spliced = biometric::embed_watermark(&bare, &now_nonce, &salt).unwrap();
        let forged = PhysicalIdentity {
            claim: CollisionClaim::new(spliced.code.encode(), pid.claim.check),
            salt: salt.to_vec(),
        };
        assert!(!mit.accepts(&p, &forged.claim));
    }

    #[test]
    fn ledger_chain_of_hundred() {
        let mut l = Ledger::new();
        for i in 0..100u32 {
            assert_eq!(l.append(&i.to_be_bytes()).unwrap(), i as u64);
        }
        assert_eq!(l.get(42).unwrap(), &42u32.to_be_bytes());
        assert_eq!(
            l.get_by_digest(&sha256(&7u32.to_be_bytes())).unwrap(),
            &7u32.to_be_bytes()
        );
        l.verify_chain().unwrap();
        l.entries[50].payload[0] ^= 0xff;
        assert!(matches!(l.verify_chain(), Err(Error::BrokenChain(50))));
        assert!(matches!(l.get(1000), Err(Error::UnknownEntry)));
        assert!(matches!(
            l.get_by_digest(&[0; 32]),
            Err(Error::UnknownEntry)
        ));
    }

    #[test]
    fn ledger_file_persists_and_detects_tamper() {
        let dir = std::env::temp_dir().join(format!("chamauth-ledger-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ledger.bin");
        let _ = std::fs::remove_file(&path);
        {
            let mut l = Ledger::open(&path).unwrap();
            l.append(b"one").unwrap();
            l.append(b"two").unwrap();
        }
        let mut l = Ledger::open(&path).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.get(1).unwrap(), b"two");
        l.append(b"three").unwrap();
        drop(l);
        let mut raw = std::fs::read(&path).unwrap();
        let last = raw.len() - 1;
        raw[last] ^= 1;
        std::fs::write(&path, raw).unwrap();
        assert!(Ledger::open(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn registry_text_round_trip() {
        let mut r = Registry::default();
        r.insert([1; 32], b"alice");
        r.insert([2; 32], b"bob");
        let back = Registry::from_text(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert!(Registry::from_text("zz\tyy").is_err());
    }

    #[test]
    fn every_ledger_token_satisfies_invariants() {
        let (mut idp, mut rng) = curve_idp(7);
        let p = idp.params().clone();
        for i in 0..5u64 {
            let kp = keygen(&p, &mut rng);
            idp.register(
                format!("id-{i}").as_bytes(),
                format!("anon-{i}").as_bytes(),
                &biometric::gen_template(i),
                kp.public(),
                &mut rng,
            )
            .unwrap();
        }
        let vk = idp.verifying_key();
        let mut seen = HashSet::new();
        for e in idp.ledger().entries() {
            let mit = MetaverseIdentityToken::from_bytes(&p, &e.payload).unwrap();
            assert!(mit.hash_valid(&p));
            assert!(mit.signature_valid(&p, &vk));
            let d = mit.digest(&p);
            assert!(seen.insert(idp.registry().lookup(&d).unwrap().to_vec()));
        }
    }
}
