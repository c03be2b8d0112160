//! Bilinear group arithmetic.
//!
//! [`PairingGroup`] is the raw arithmetic of a type-3 pairing
//! `e: G1 x G2 -> GT`, written multiplicatively. Two backends implement it:
//! [`Bls12381`] for real use and [`Toy`], where every element is represented
//! by its discrete log modulo a small prime so that each equation of the
//! scheme can be checked by hand.
//!
//! Protocol code never calls the raw trait for the operations of the cost
//! model. It goes through [`SystemParams`], which reports every G1
//! multiplication, exponentiation and pairing to the thread-local
//! [`counter`].

pub mod bls;
pub mod counter;
pub mod toy;

use std::fmt::Debug;

use rand::RngCore;

pub use bls::Bls12381;
pub use counter::{measure, MeasureScope, Op, OpCounter};
pub use toy::{Toy, ToyElement};

use crate::error::{Error, Result};
use counter::record;

/// Domain separation tag for hashing into source group one.
pub const HASH_TO_G1_DST: &[u8] = b"CHAMAUTH-H2G-v1";

/// Length of every encoded scalar.
pub const SCALAR_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupId {
    Bls12381,
    Toy(u64),
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupId::Bls12381 => f.write_str("bls12-381"),
            GroupId::Toy(q) => write!(f, "toy-q{q}"),
        }
    }
}

/// Raw arithmetic of an asymmetric pairing group. Nothing here is counted.
pub trait PairingGroup: Copy + Debug + PartialEq + Eq + Send + Sync + 'static {
    type Scalar: Copy + Debug + PartialEq + Eq + Send + Sync;
    type G1: Copy + Debug + PartialEq + Eq + Send + Sync;
    type G2: Copy + Debug + PartialEq + Eq + Send + Sync;
    type Gt: Copy + Debug + PartialEq + Eq + Send + Sync;

    fn id(&self) -> GroupId;
    /// Prime group order, big-endian without leading zeros.
    fn order_be(&self) -> Vec<u8>;

    fn g1_generator(&self) -> Self::G1;
    fn g2_generator(&self) -> Self::G2;
    fn g1_identity(&self) -> Self::G1;
    fn g2_identity(&self) -> Self::G2;
    fn gt_identity(&self) -> Self::Gt;

    fn g1_mul(&self, a: &Self::G1, b: &Self::G1) -> Self::G1;
    fn g1_inv(&self, a: &Self::G1) -> Self::G1;
    fn g1_exp(&self, a: &Self::G1, s: &Self::Scalar) -> Self::G1;
    fn g2_exp(&self, a: &Self::G2, s: &Self::Scalar) -> Self::G2;
    fn gt_exp(&self, a: &Self::Gt, s: &Self::Scalar) -> Self::Gt;
    fn pairing(&self, a: &Self::G1, b: &Self::G2) -> Self::Gt;

    /// Deterministic map from bytes into G1. May return the identity; the
    /// caller re-derives in that case.
    fn hash_to_g1_raw(&self, msg: &[u8], dst: &[u8]) -> Self::G1;

    fn scalar_from_u64(&self, v: u64) -> Self::Scalar;
    fn scalar_is_zero(&self, s: &Self::Scalar) -> bool;
    fn scalar_add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_inv(&self, s: &Self::Scalar) -> Option<Self::Scalar>;
    /// Uniform over the whole field, zero included.
    fn scalar_random(&self, rng: &mut dyn RngCore) -> Self::Scalar;
    /// Reduces 64 uniformly random bytes into the field.
    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> Self::Scalar;
    fn scalar_to_bytes(&self, s: &Self::Scalar) -> [u8; SCALAR_LEN];
    /// Canonical decoding: the value must already be reduced.
    fn scalar_from_bytes(&self, b: &[u8; SCALAR_LEN]) -> Option<Self::Scalar>;

    fn g1_len(&self) -> usize;
    fn g2_len(&self) -> usize;
    fn g1_to_bytes(&self, a: &Self::G1) -> Vec<u8>;
    fn g1_from_bytes(&self, b: &[u8]) -> Option<Self::G1>;
    fn g2_to_bytes(&self, a: &Self::G2) -> Vec<u8>;
    fn g2_from_bytes(&self, b: &[u8]) -> Option<Self::G2>;
}

/// Public system parameters: the group, its generators and the hash-to-G1
/// configuration. All counted arithmetic lives here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemParams<G: PairingGroup> {
    group: G,
    g1: G::G1,
    g2: G::G2,
    security_bits: Option<u32>,
    h2g_dst: &'static [u8],
}

/// Parameters over BLS12-381. Only the 128-bit level is supported.
pub fn setup(security_level: u32) -> Result<SystemParams<Bls12381>> {
    if security_level != 128 {
        return Err(Error::UnsupportedSecurityLevel(security_level));
    }
    Ok(SystemParams::new(Bls12381, Some(security_level)))
}

/// Parameters over the exponent-arithmetic toy group of prime order `q`.
pub fn toy_setup(q: u64) -> Result<SystemParams<Toy>> {
    Ok(SystemParams::new(Toy::new(q)?, None))
}

impl<G: PairingGroup> SystemParams<G> {
    pub fn new(group: G, security_bits: Option<u32>) -> Self {
        let g1 = group.g1_generator();
        let g2 = group.g2_generator();
        SystemParams {
            group,
            g1,
            g2,
            security_bits,
            h2g_dst: HASH_TO_G1_DST,
        }
    }

    /// The raw, uncounted group.
    pub fn group(&self) -> &G {
        &self.group
    }

    pub fn group_id(&self) -> GroupId {
        self.group.id()
    }

    pub fn order_be(&self) -> Vec<u8> {
        self.group.order_be()
    }

    pub fn security_bits(&self) -> Option<u32> {
        self.security_bits
    }

    pub fn g1(&self) -> &G::G1 {
        &self.g1
    }

    pub fn g2(&self) -> &G::G2 {
        &self.g2
    }

    // Counted operations.

    pub fn mul_g1(&self, a: &G::G1, b: &G::G1) -> G::G1 {
        record(Op::M1);
        self.group.g1_mul(a, b)
    }

    /// `a / b`: one G1 multiplication (inversion is free).
    pub fn div_g1(&self, a: &G::G1, b: &G::G1) -> G::G1 {
        record(Op::M1);
        self.group.g1_mul(a, &self.group.g1_inv(b))
    }

    pub fn exp_g1(&self, a: &G::G1, s: &G::Scalar) -> G::G1 {
        record(Op::E1);
        self.group.g1_exp(a, s)
    }

    pub fn exp_g2(&self, a: &G::G2, s: &G::Scalar) -> G::G2 {
        record(Op::E2);
        self.group.g2_exp(a, s)
    }

    pub fn exp_gt(&self, a: &G::Gt, s: &G::Scalar) -> G::Gt {
        record(Op::Et);
        self.group.gt_exp(a, s)
    }

    pub fn pairing(&self, a: &G::G1, b: &G::G2) -> G::Gt {
        record(Op::Pairing);
        self.group.pairing(a, b)
    }

    // Uncounted helpers.

    /// Hashes `message` into G1, never returning the identity.
    pub fn hash_to_g1(&self, message: &[u8]) -> G::G1 {
        let id = self.group.g1_identity();
        let h = self.group.hash_to_g1_raw(message, self.h2g_dst);
        if h != id {
            return h;
        }
        let mut buf = message.to_vec();
        for ctr in 0u32.. {
            buf.truncate(message.len());
            buf.extend_from_slice(&ctr.to_be_bytes());
            let h = self.group.hash_to_g1_raw(&buf, self.h2g_dst);
            if h != id {
                return h;
            }
        }
        unreachable!("hash_to_g1 exhausted its retry counter")
    }

    /// Uniform over `[1, q)`.
    pub fn random_nonzero_scalar(&self, rng: &mut dyn RngCore) -> G::Scalar {
        loop {
            let s = self.group.scalar_random(rng);
            if !self.group.scalar_is_zero(&s) {
                return s;
            }
        }
    }

    pub fn g1_is_identity(&self, a: &G::G1) -> bool {
        *a == self.group.g1_identity()
    }

    pub fn g2_is_identity(&self, a: &G::G2) -> bool {
        *a == self.group.g2_identity()
    }

    pub fn encode_g1(&self, a: &G::G1) -> Vec<u8> {
        self.group.g1_to_bytes(a)
    }

    pub fn decode_g1(&self, b: &[u8]) -> Result<G::G1> {
        self.group
            .g1_from_bytes(b)
            .ok_or(Error::Encoding("G1 element"))
    }

    pub fn encode_g2(&self, a: &G::G2) -> Vec<u8> {
        self.group.g2_to_bytes(a)
    }

    pub fn decode_g2(&self, b: &[u8]) -> Result<G::G2> {
        self.group
            .g2_from_bytes(b)
            .ok_or(Error::Encoding("G2 element"))
    }

    pub fn encode_scalar(&self, s: &G::Scalar) -> [u8; SCALAR_LEN] {
        self.group.scalar_to_bytes(s)
    }

    pub fn decode_scalar(&self, b: &[u8]) -> Result<G::Scalar> {
        let arr: &[u8; SCALAR_LEN] = b.try_into().map_err(|_| Error::Encoding("scalar length"))?;
        self.group
            .scalar_from_bytes(arr)
            .ok_or(Error::Encoding("scalar not reduced"))
    }
}
