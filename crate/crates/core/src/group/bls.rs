//! BLS12-381 backend.

use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
use bls12_381::{G1Affine, G1Projective, G2Affine, G2Projective, Gt, Scalar};
use ff::Field;
use rand::RngCore;

use super::{GroupId, PairingGroup, SCALAR_LEN};

/// Order of the BLS12-381 prime-order subgroups.
const ORDER_BE: [u8; 32] = [
    0x73, 0xed, 0xa7, 0x53, 0x29, 0x9d, 0x7d, 0x48, 0x33, 0x39, 0xd8, 0x08, 0x09, 0xa1, 0xd8, 0x05,
    0x53, 0xbd, 0xa4, 0x02, 0xff, 0xfe, 0x5b, 0xfe, 0xff, 0xff, 0xff, 0xff, 0x00, 0x00, 0x00, 0x01,
];

const G1_COMPRESSED: usize = 48;
const G2_COMPRESSED: usize = 96;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Bls12381;

impl PairingGroup for Bls12381 {
    type Scalar = Scalar;
    type G1 = G1Projective;
    type G2 = G2Projective;
    type Gt = Gt;

    fn id(&self) -> GroupId {
        GroupId::Bls12381
    }

    fn order_be(&self) -> Vec<u8> {
        ORDER_BE.to_vec()
    }

    fn g1_generator(&self) -> G1Projective {
        G1Projective::generator()
    }

    fn g2_generator(&self) -> G2Projective {
        G2Projective::generator()
    }

    fn g1_identity(&self) -> G1Projective {
        G1Projective::identity()
    }

    fn g2_identity(&self) -> G2Projective {
        G2Projective::identity()
    }

    fn gt_identity(&self) -> Gt {
        Gt::identity()
    }

    fn g1_mul(&self, a: &G1Projective, b: &G1Projective) -> G1Projective {
        a + b
    }

    fn g1_inv(&self, a: &G1Projective) -> G1Projective {
        -a
    }

    fn g1_exp(&self, a: &G1Projective, s: &Scalar) -> G1Projective {
        a * s
    }

    fn g2_exp(&self, a: &G2Projective, s: &Scalar) -> G2Projective {
        a * s
    }

    fn gt_exp(&self, a: &Gt, s: &Scalar) -> Gt {
        a * s
    }

    fn pairing(&self, a: &G1Projective, b: &G2Projective) -> Gt {
        bls12_381::pairing(&G1Affine::from(a), &G2Affine::from(b))
    }

    fn hash_to_g1_raw(&self, msg: &[u8], dst: &[u8]) -> G1Projective {
        <G1Projective as HashToCurve<ExpandMsgXmd<sha2_09::Sha256>>>::hash_to_curve(msg, dst)
    }

    fn scalar_from_u64(&self, v: u64) -> Scalar {
        Scalar::from(v)
    }

    fn scalar_is_zero(&self, s: &Scalar) -> bool {
        bool::from(s.is_zero())
    }

    fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn scalar_inv(&self, s: &Scalar) -> Option<Scalar> {
        Option::from(s.invert())
    }

    fn scalar_random(&self, rng: &mut dyn RngCore) -> Scalar {
        Scalar::random(rng)
    }

    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> Scalar {
        let mut le = *bytes;
        le.reverse();
        Scalar::from_bytes_wide(&le)
    }

    fn scalar_to_bytes(&self, s: &Scalar) -> [u8; SCALAR_LEN] {
        let mut b = s.to_bytes();
        b.reverse();
        b
    }

    fn scalar_from_bytes(&self, b: &[u8; SCALAR_LEN]) -> Option<Scalar> {
        let mut le = *b;
        le.reverse();
        Option::from(Scalar::from_bytes(&le))
    }

    fn g1_len(&self) -> usize {
        G1_COMPRESSED
    }

    fn g2_len(&self) -> usize {
        G2_COMPRESSED
    }

    fn g1_to_bytes(&self, a: &G1Projective) -> Vec<u8> {
        G1Affine::from(a).to_compressed().to_vec()
    }

    fn g1_from_bytes(&self, b: &[u8]) -> Option<G1Projective> {
        let arr: &[u8; G1_COMPRESSED] = b.try_into().ok()?;
        Option::<G1Affine>::from(G1Affine::from_compressed(arr)).map(G1Projective::from)
    }

    fn g2_to_bytes(&self, a: &G2Projective) -> Vec<u8> {
        G2Affine::from(a).to_compressed().to_vec()
    }

    fn g2_from_bytes(&self, b: &[u8]) -> Option<G2Projective> {
        let arr: &[u8; G2_COMPRESSED] = b.try_into().ok()?;
        Option::<G2Affine>::from(G2Affine::from_compressed(arr)).map(G2Projective::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_scalar_modulus() {
        // q - 1 encodes, q does not.
        let g = Bls12381;
        let mut q_minus_one = ORDER_BE;
        q_minus_one[31] = 0;
        assert!(g.scalar_from_bytes(&q_minus_one).is_some());
        assert!(g.scalar_from_bytes(&ORDER_BE).is_none());
        assert_eq!(g.scalar_to_bytes(&g.scalar_from_u64(1))[31], 1);
    }

    #[test]
    fn identity_encoding_is_distinguished() {
        let g = Bls12381;
        let id = g.g1_to_bytes(&g.g1_identity());
        assert_eq!(id[0], 0xc0);
        assert!(id[1..].iter().all(|&b| b == 0));
        assert_ne!(g.g1_to_bytes(&g.g1_generator())[0] & 0x40, 0x40);
        assert_eq!(g.g2_to_bytes(&g.g2_identity())[0], 0xc0);
    }

    #[test]
    fn wide_reduction_is_big_endian() {
        let g = Bls12381;
        let mut wide = [0u8; 64];
        wide[63] = 5;
        assert_eq!(g.scalar_from_wide(&wide), Scalar::from(5u64));
    }
}
