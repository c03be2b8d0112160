//! Chameleon collision signature.
//!
//! One trapdoor `x` serves both as the chameleon-hash trapdoor and as the
//! signing key: anyone holding `x` can find a check parameter
//! `R' = (h / H(M'))^x` that makes `(M', R')` collide with the original
//! `(M, R)` under the chameleon hash `h`, and that collision *is* the
//! signature on `M'`.
//!
//! With an asymmetric pairing the public key `y = g^(1/x)` is published in
//! both source groups: `y1` in G1 feeds the hash `h = H(M) * y1^r`, `y2` in
//! G2 feeds the check `e(h / H(M), g2) == e(R, y2)`.
//!
//! Cost per call, counted through [`SystemParams`]:
//!
//! | op     | cost            |
//! |--------|-----------------|
//! | hash   | 2 E1 + 1 M1     |
//! | check  | 1 M1 + 2 P      |
//! | sign   | 1 E1 + 1 M1     |
//! | verify | 2 M1 + 4 P      |

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::group::{PairingGroup, SystemParams, SCALAR_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKey<G: PairingGroup> {
    pub g1: G::G1,
    pub g2: G::G2,
}

impl<G: PairingGroup> PublicKey<G> {
    /// `e(y1, g2) == e(g1, y2)` and neither half is the identity.
    pub fn is_consistent(&self, params: &SystemParams<G>) -> bool {
        if params.g1_is_identity(&self.g1) || params.g2_is_identity(&self.g2) {
            return false;
        }
        let g = params.group();
        g.pairing(&self.g1, params.g2()) == g.pairing(params.g1(), &self.g2)
    }

    /// `y1 || y2` in canonical encodings.
    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut out = params.encode_g1(&self.g1);
        out.extend_from_slice(&params.encode_g2(&self.g2));
        out
    }

    pub fn from_bytes(params: &SystemParams<G>, b: &[u8]) -> Result<Self> {
        let n1 = params.group().g1_len();
        if b.len() != n1 + params.group().g2_len() {
            return Err(Error::Encoding("public key length"));
        }
        Ok(PublicKey {
            g1: params.decode_g1(&b[..n1])?,
            g2: params.decode_g2(&b[n1..])?,
        })
    }

    pub fn encoded_len(params: &SystemParams<G>) -> usize {
        params.group().g1_len() + params.group().g2_len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChameleonKeyPair<G: PairingGroup> {
    sk: G::Scalar,
    pk: PublicKey<G>,
}

impl<G: PairingGroup> ChameleonKeyPair<G> {
    pub fn secret(&self) -> &G::Scalar {
        &self.sk
    }

    pub fn public(&self) -> &PublicKey<G> {
        &self.pk
    }
}

/// Draws `x` uniformly from `[1, q)` and derives `y = g^(1/x)` in both groups.
pub fn keygen<G: PairingGroup>(
    params: &SystemParams<G>,
    rng: &mut dyn RngCore,
) -> ChameleonKeyPair<G> {
    let x = params.random_nonzero_scalar(rng);
    keypair_from_secret(params, x).expect("nonzero scalar has an inverse")
}

pub fn keypair_from_secret<G: PairingGroup>(
    params: &SystemParams<G>,
    x: G::Scalar,
) -> Result<ChameleonKeyPair<G>> {
    let inv = params.group().scalar_inv(&x).ok_or(Error::ZeroScalar)?;
    let pk = PublicKey {
        g1: params.exp_g1(params.g1(), &inv),
        g2: params.exp_g2(params.g2(), &inv),
    };
    Ok(ChameleonKeyPair { sk: x, pk })
}

/// The chameleon hash value `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChameleonHash<G: PairingGroup>(G::G1);

impl<G: PairingGroup> ChameleonHash<G> {
    pub fn new(params: &SystemParams<G>, h: G::G1) -> Result<Self> {
        if params.g1_is_identity(&h) {
            return Err(Error::IdentityElement);
        }
        Ok(ChameleonHash(h))
    }

    pub fn element(&self) -> &G::G1 {
        &self.0
    }

    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        params.encode_g1(&self.0)
    }

    pub fn from_bytes(params: &SystemParams<G>, b: &[u8]) -> Result<Self> {
        Self::new(params, params.decode_g1(b)?)
    }
}

/// A check parameter `R` (or `R'`). Never the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckParam<G: PairingGroup>(G::G1);

impl<G: PairingGroup> CheckParam<G> {
    pub fn new(params: &SystemParams<G>, r: G::G1) -> Result<Self> {
        if params.g1_is_identity(&r) {
            return Err(Error::IdentityElement);
        }
        Ok(CheckParam(r))
    }

    pub fn element(&self) -> &G::G1 {
        &self.0
    }

    pub fn to_bytes(&self, params: &SystemParams<G>) -> Vec<u8> {
        params.encode_g1(&self.0)
    }

    pub fn from_bytes(params: &SystemParams<G>, b: &[u8]) -> Result<Self> {
        Self::new(params, params.decode_g1(b)?)
    }
}

/// A message together with its check parameter. Only [`check`] decides
/// whether the pair is valid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollisionClaim<G: PairingGroup> {
    pub message: Vec<u8>,
    pub check: CheckParam<G>,
}

impl<G: PairingGroup> CollisionClaim<G> {
    pub fn new(message: impl Into<Vec<u8>>, check: CheckParam<G>) -> Self {
        CollisionClaim {
            message: message.into(),
            check,
        }
    }

    pub fn encode(&self, params: &SystemParams<G>, w: &mut Writer) {
        w.bytes(&self.message).fixed(&self.check.to_bytes(params));
    }

    pub fn decode(params: &SystemParams<G>, r: &mut Reader<'_>) -> Result<Self> {
        let message = r.bytes()?.to_vec();
        let check = CheckParam::from_bytes(params, r.fixed(params.group().g1_len())?)?;
        Ok(CollisionClaim { message, check })
    }
}

/// Hashes `message` under `pk` with fresh randomness. `r` never leaves this
/// function except through `R = g1^r`.
pub fn hash<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    message: &[u8],
    rng: &mut dyn RngCore,
) -> (ChameleonHash<G>, CheckParam<G>) {
    let m = params.hash_to_g1(message);
    loop {
        let r = params.random_nonzero_scalar(rng);
        // h is the identity only when m = y1^-r, probability 1/q.
        if let Ok(out) = hash_point(params, pk, &m, &r) {
            return out;
        }
    }
}

/// [`hash`] with caller-chosen randomness, for fixtures and test vectors.
pub fn hash_with_nonce<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    message: &[u8],
    r: &G::Scalar,
) -> Result<(ChameleonHash<G>, CheckParam<G>)> {
    hash_point(params, pk, &params.hash_to_g1(message), r)
}

/// `h = m * y1^r`, `R = g1^r` for an already-hashed `m`.
pub fn hash_point<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    m: &G::G1,
    r: &G::Scalar,
) -> Result<(ChameleonHash<G>, CheckParam<G>)> {
    if params.group().scalar_is_zero(r) {
        return Err(Error::ZeroScalar);
    }
    let blind = params.exp_g1(&pk.g1, r);
    let check = params.exp_g1(params.g1(), r);
    let h = params.mul_g1(m, &blind);
    Ok((ChameleonHash::new(params, h)?, CheckParam(check)))
}

/// `e(h / H(message), g2) == e(R, y2)`.
pub fn check<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    h: &ChameleonHash<G>,
    message: &[u8],
    r: &CheckParam<G>,
) -> bool {
    check_point(params, pk, h, &params.hash_to_g1(message), r)
}

pub fn check_point<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    h: &ChameleonHash<G>,
    m: &G::G1,
    r: &CheckParam<G>,
) -> bool {
    let quotient = params.div_g1(&h.0, m);
    let lhs = params.pairing(&quotient, params.g2());
    let rhs = params.pairing(&r.0, &pk.g2);
    lhs == rhs
}

/// Convenience single-claim form of [`check`].
pub fn check_claim<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    h: &ChameleonHash<G>,
    claim: &CollisionClaim<G>,
) -> bool {
    check(params, pk, h, &claim.message, &claim.check)
}

/// `R' = (h / H(new_message))^x`. Deterministic.
pub fn sign<G: PairingGroup>(
    params: &SystemParams<G>,
    sk: &G::Scalar,
    h: &ChameleonHash<G>,
    new_message: &[u8],
) -> Result<CheckParam<G>> {
    sign_point(params, sk, h, &params.hash_to_g1(new_message))
}

pub fn sign_point<G: PairingGroup>(
    params: &SystemParams<G>,
    sk: &G::Scalar,
    h: &ChameleonHash<G>,
    m: &G::G1,
) -> Result<CheckParam<G>> {
    let base = params.div_g1(&h.0, m);
    // An identity base would give an identity R' that checks under any key.
    if params.g1_is_identity(&base) {
        return Err(Error::DegenerateBase);
    }
    let r = params.exp_g1(&base, sk);
    CheckParam::new(params, r)
}

/// Both claims pass [`check`] against the same `(pk, h)`.
pub fn verify<G: PairingGroup>(
    params: &SystemParams<G>,
    pk: &PublicKey<G>,
    h: &ChameleonHash<G>,
    claim_a: &CollisionClaim<G>,
    claim_b: &CollisionClaim<G>,
) -> bool {
    // Both checks always run so the cost does not depend on the outcome.
    let a = check_claim(params, pk, h, claim_a);
    let b = check_claim(params, pk, h, claim_b);
    a & b
}

/// Key files: `"CHAM" || version || body`. The body is `sk || y1 || y2` for
/// a secret key file and `y1 || y2` for a public key file.
pub mod keyfile {
    use super::*;

    pub const MAGIC: &[u8; 4] = b"CHAM";
    pub const VERSION: u8 = 1;

    #[derive(Clone, Debug, PartialEq, Eq)]
    pub enum KeyFile<G: PairingGroup> {
        Secret(ChameleonKeyPair<G>),
        Public(PublicKey<G>),
    }

    impl<G: PairingGroup> KeyFile<G> {
        pub fn public(&self) -> &PublicKey<G> {
            match self {
                KeyFile::Secret(kp) => kp.public(),
                KeyFile::Public(pk) => pk,
            }
        }
    }

    pub fn encode_secret<G: PairingGroup>(
        params: &SystemParams<G>,
        kp: &ChameleonKeyPair<G>,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(MAGIC)
            .u8(VERSION)
            .fixed(&params.encode_scalar(kp.secret()))
            .fixed(&kp.public().to_bytes(params));
        w.finish()
    }

    pub fn encode_public<G: PairingGroup>(params: &SystemParams<G>, pk: &PublicKey<G>) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(MAGIC).u8(VERSION).fixed(&pk.to_bytes(params));
        w.finish()
    }

    pub fn decode<G: PairingGroup>(params: &SystemParams<G>, bytes: &[u8]) -> Result<KeyFile<G>> {
        let mut r = Reader::new(bytes);
        if r.fixed(4)? != MAGIC {
            return Err(Error::Encoding("key file magic"));
        }
        if r.u8()? != VERSION {
            return Err(Error::Encoding("key file version"));
        }
        let pk_len = PublicKey::encoded_len(params);
        match r.remaining() {
            n if n == pk_len => Ok(KeyFile::Public(PublicKey::from_bytes(
                params,
                r.fixed(pk_len)?,
            )?)),
            n if n == SCALAR_LEN + pk_len => {
                let sk = params.decode_scalar(r.fixed(SCALAR_LEN)?)?;
                let pk = PublicKey::from_bytes(params, r.fixed(pk_len)?)?;
                let kp = keypair_from_secret(params, sk)?;
                if kp.pk != pk {
                    return Err(Error::InvalidPublicKey);
                }
                Ok(KeyFile::Secret(kp))
            }
            _ => Err(Error::Encoding("key file length")),
        }
    }
}

/// One hash fixture: fixed trapdoor `x`, fixed randomness `r`, and the
/// resulting `(h, R)`. Serialized one JSON object per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVector {
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve: Option<String>,
    pub x: String,
    pub r: String,
    pub message: String,
    pub h: String,
    #[serde(rename = "R")]
    pub check: String,
}

impl TestVector {
    pub fn generate<G: PairingGroup>(
        params: &SystemParams<G>,
        x: &G::Scalar,
        r: &G::Scalar,
        message: &[u8],
    ) -> Result<Self> {
        let kp = keypair_from_secret(params, *x)?;
        let (h, check) = hash_with_nonce(params, kp.public(), message, r)?;
        let (backend, q, curve) = match params.group_id() {
            crate::group::GroupId::Toy(q) => ("toy", Some(q), None),
            id => ("curve", None, Some(id.to_string())),
        };
        Ok(TestVector {
            backend: backend.into(),
            q,
            curve,
            x: hex::encode(params.encode_scalar(x)),
            r: hex::encode(params.encode_scalar(r)),
            message: hex::encode(message),
            h: hex::encode(h.to_bytes(params)),
            check: hex::encode(check.to_bytes(params)),
        })
    }

    /// Recomputes the vector and compares every field.
    pub fn matches<G: PairingGroup>(&self, params: &SystemParams<G>) -> Result<bool> {
        let dec = |s: &str| hex::decode(s).map_err(|_| Error::Encoding("vector hex"));
        let x = params.decode_scalar(&dec(&self.x)?)?;
        let r = params.decode_scalar(&dec(&self.r)?)?;
        let again = Self::generate(params, &x, &r, &dec(&self.message)?)?;
        Ok(again == *self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{measure, setup, toy_setup, OpCounter, Toy, ToyElement};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy13() -> SystemParams<Toy> {
        toy_setup(13).unwrap()
    }

    fn e(v: u64) -> ToyElement {
        ToyElement(v)
    }

    #[test]
    fn toy_keygen_forced_three() {
        let p = toy13();
        let kp = keypair_from_secret(&p, 3).unwrap();
        assert_eq!(kp.public().g1, e(9));
        assert_eq!(kp.public().g2, e(9));
        assert!(kp.public().is_consistent(&p));
        assert!(keypair_from_secret(&p, 0).is_err());
    }

    #[test]
    fn toy_hash_check_sign_fixture() {
        let p = toy13();
        let kp = keypair_from_secret(&p, 3).unwrap();
        let (h, r) = hash_point(&p, kp.public(), &e(5), &2).unwrap();
        assert_eq!(*h.element(), e(10));
        assert_eq!(*r.element(), e(2));
        assert!(check_point(&p, kp.public(), &h, &e(5), &r));
        let r3 = CheckParam::new(&p, e(3)).unwrap();
        assert!(!check_point(&p, kp.public(), &h, &e(5), &r3));

        let r_new = sign_point(&p, &3, &h, &e(7)).unwrap();
        assert_eq!(*r_new.element(), e(9));
        assert!(check_point(&p, kp.public(), &h, &e(7), &r_new));

        // Signed with x = 5 instead of 3.
        let r_wrong = sign_point(&p, &5, &h, &e(7)).unwrap();
        assert_eq!(*r_wrong.element(), e(2));
        assert!(!check_point(&p, kp.public(), &h, &e(7), &r_wrong));
    }

    #[test]
    fn sign_rejects_identity_base() {
        let p = toy13();
        let h = ChameleonHash::new(&p, e(7)).unwrap();
        assert!(matches!(
            sign_point(&p, &3, &h, &e(7)),
            Err(Error::DegenerateBase)
        ));
    }

    #[test]
    fn identity_check_param_rejected() {
        let p = toy13();
        assert!(CheckParam::new(&p, e(0)).is_err());
        assert!(ChameleonHash::new(&p, e(0)).is_err());
    }

    #[test]
    fn table_two_costs_on_curve() {
        let p = setup(128).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = keygen(&p, &mut rng);
        let ((h, r), c) = measure(|| hash(&p, kp.public(), b"M", &mut rng));
        assert_eq!(c, OpCounter::new(2, 0, 0, 1, 0));
        let (ok, c) = measure(|| check(&p, kp.public(), &h, b"M", &r));
        assert!(ok);
        assert_eq!(c, OpCounter::new(0, 0, 0, 1, 2));
        let (r2, c) = measure(|| sign(&p, kp.secret(), &h, b"M2").unwrap());
        assert_eq!(c, OpCounter::new(1, 0, 0, 1, 0));
        let a = CollisionClaim::new(b"M".to_vec(), r);
        let b = CollisionClaim::new(b"M2".to_vec(), r2);
        let (ok, c) = measure(|| verify(&p, kp.public(), &h, &a, &b));
        assert!(ok);
        assert_eq!(c, OpCounter::new(0, 0, 0, 2, 4));
    }

    #[test]
    fn failed_verify_costs_the_same() {
        let p = setup(128).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let kp = keygen(&p, &mut rng);
        let (h, r) = hash(&p, kp.public(), b"M", &mut rng);
        let bad = CollisionClaim::new(b"other".to_vec(), r);
        let good = CollisionClaim::new(b"M".to_vec(), r);
        let (ok, c) = measure(|| verify(&p, kp.public(), &h, &bad, &good));
        assert!(!ok);
        assert_eq!(c, OpCounter::new(0, 0, 0, 2, 4));
    }

    #[test]
    fn sign_on_original_message_reproduces_r() {
        let p = setup(128).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = keygen(&p, &mut rng);
        let (h, r) = hash(&p, kp.public(), b"anon", &mut rng);
        let again = sign(&p, kp.secret(), &h, b"anon").unwrap();
        assert_eq!(again.to_bytes(&p), r.to_bytes(&p));
    }

    #[test]
    fn verify_duplicated_claim() {
        let p = setup(128).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let kp = keygen(&p, &mut rng);
        let (h, r) = hash(&p, kp.public(), b"anon", &mut rng);
        let c = CollisionClaim::new(b"anon".to_vec(), r);
        assert!(verify(&p, kp.public(), &h, &c, &c));
    }

    #[test]
    fn key_files_round_trip_and_reject_garbage() {
        let p = setup(128).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let kp = keygen(&p, &mut rng);
        let sec = keyfile::encode_secret(&p, &kp);
        let publ = keyfile::encode_public(&p, kp.public());
        assert_eq!(&sec[..4], b"CHAM");
        assert_eq!(sec.len(), 5 + 32 + 48 + 96);
        assert_eq!(publ.len(), 5 + 48 + 96);
        assert_eq!(
            keyfile::decode(&p, &sec).unwrap(),
            keyfile::KeyFile::Secret(kp.clone())
        );
        assert_eq!(
            keyfile::decode(&p, &publ).unwrap(),
            keyfile::KeyFile::Public(*kp.public())
        );
        let mut bad = sec.clone();
        bad[0] = b'X';
        assert!(keyfile::decode(&p, &bad).is_err());
        assert!(keyfile::decode(&p, &sec[..sec.len() - 1]).is_err());
        // sk that does not match the stored public key
        let mut mismatched = sec.clone();
        mismatched[5 + 31] ^= 1;
        assert!(keyfile::decode(&p, &mismatched).is_err());
    }

    #[test]
    fn vectors_regenerate() {
        let p = toy13();
        let v = TestVector::generate(&p, &3, &2, b"abc").unwrap();
        assert_eq!(v.backend, "toy");
        assert!(v.matches(&p).unwrap());
        let mut tampered = v.clone();
        tampered.h = hex::encode(p.encode_g1(&e(1)));
        assert!(!tampered.matches(&p).unwrap());
    }
}
