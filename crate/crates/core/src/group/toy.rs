//! Exponent-arithmetic toy group.
//!
//! Every element of G1, G2 and GT is stored as its discrete log with respect
//! to the generator, an integer mod `q`. The group operation becomes addition,
//! exponentiation becomes multiplication and the pairing is the product of
//! the two logs. The generators are `1` and the identity is `0`.

use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use super::{GroupId, PairingGroup, SCALAR_LEN};
use crate::error::{Error, Result};

/// Largest order accepted; keeps every product inside a `u128`.
const MAX_ORDER: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyElement(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Toy {
    q: u64,
}

impl Toy {
    pub fn new(q: u64) -> Result<Self> {
        if !(3..MAX_ORDER).contains(&q) || !is_prime(q) {
            return Err(Error::InvalidToyOrder(q));
        }
        Ok(Toy { q })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.q as u128) as u64
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    fn pow(&self, mut base: u64, mut e: u64) -> u64 {
        let mut acc = 1;
        base %= self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    fn reduce_be(&self, bytes: &[u8], modulus: u64) -> u64 {
        bytes
            .iter()
            .fold(0u128, |acc, &b| (acc * 256 + b as u128) % modulus as u128) as u64
    }

    fn element(&self, b: &[u8]) -> Option<ToyElement> {
        let arr: [u8; 8] = b.try_into().ok()?;
        let v = u64::from_be_bytes(arr);
        (v < self.q).then_some(ToyElement(v))
    }
}

impl PairingGroup for Toy {
    type Scalar = u64;
    type G1 = ToyElement;
    type G2 = ToyElement;
    type Gt = ToyElement;

    fn id(&self) -> GroupId {
        GroupId::Toy(self.q)
    }

    fn order_be(&self) -> Vec<u8> {
        let b = self.q.to_be_bytes();
        let skip = b.iter().take_while(|&&x| x == 0).count();
        b[skip..].to_vec()
    }

    fn g1_generator(&self) -> ToyElement {
        ToyElement(1)
    }

    fn g2_generator(&self) -> ToyElement {
        ToyElement(1)
    }

    fn g1_identity(&self) -> ToyElement {
        ToyElement(0)
    }

    fn g2_identity(&self) -> ToyElement {
        ToyElement(0)
    }

    fn gt_identity(&self) -> ToyElement {
        ToyElement(0)
    }

    fn g1_mul(&self, a: &ToyElement, b: &ToyElement) -> ToyElement {
        ToyElement(self.add(a.0, b.0))
    }

    fn g1_inv(&self, a: &ToyElement) -> ToyElement {
        ToyElement((self.q - a.0 % self.q) % self.q)
    }

    fn g1_exp(&self, a: &ToyElement, s: &u64) -> ToyElement {
        ToyElement(self.mul(a.0, *s))
    }

    fn g2_exp(&self, a: &ToyElement, s: &u64) -> ToyElement {
        ToyElement(self.mul(a.0, *s))
    }

    fn gt_exp(&self, a: &ToyElement, s: &u64) -> ToyElement {
        ToyElement(self.mul(a.0, *s))
    }

    fn pairing(&self, a: &ToyElement, b: &ToyElement) -> ToyElement {
        ToyElement(self.mul(a.0, b.0))
    }

    /// `(SHA-256(msg) mod (q - 1)) + 1`. The tag is ignored.
    fn hash_to_g1_raw(&self, msg: &[u8], _dst: &[u8]) -> ToyElement {
        let digest = Sha256::digest(msg);
        ToyElement(self.reduce_be(&digest, self.q - 1) + 1)
    }

    fn scalar_from_u64(&self, v: u64) -> u64 {
        v % self.q
    }

    fn scalar_is_zero(&self, s: &u64) -> bool {
        *s == 0
    }

    fn scalar_add(&self, a: &u64, b: &u64) -> u64 {
        self.add(*a, *b)
    }

    fn scalar_mul(&self, a: &u64, b: &u64) -> u64 {
        self.mul(*a, *b)
    }

    fn scalar_inv(&self, s: &u64) -> Option<u64> {
        (!s.is_multiple_of(self.q)).then(|| self.pow(*s, self.q - 2))
    }

    fn scalar_random(&self, rng: &mut dyn RngCore) -> u64 {
        rng.gen_range(0..self.q)
    }

    fn scalar_from_wide(&self, bytes: &[u8; 64]) -> u64 {
        self.reduce_be(bytes, self.q)
    }

    fn scalar_to_bytes(&self, s: &u64) -> [u8; SCALAR_LEN] {
        let mut out = [0u8; SCALAR_LEN];
        out[SCALAR_LEN - 8..].copy_from_slice(&s.to_be_bytes());
        out
    }

    fn scalar_from_bytes(&self, b: &[u8; SCALAR_LEN]) -> Option<u64> {
        if b[..SCALAR_LEN - 8].iter().any(|&x| x != 0) {
            return None;
        }
        let v = u64::from_be_bytes(b[SCALAR_LEN - 8..].try_into().unwrap());
        (v < self.q).then_some(v)
    }

    fn g1_len(&self) -> usize {
        8
    }

    fn g2_len(&self) -> usize {
        8
    }

    fn g1_to_bytes(&self, a: &ToyElement) -> Vec<u8> {
        a.0.to_be_bytes().to_vec()
    }

    fn g1_from_bytes(&self, b: &[u8]) -> Option<ToyElement> {
        self.element(b)
    }

    fn g2_to_bytes(&self, a: &ToyElement) -> Vec<u8> {
        a.0.to_be_bytes().to_vec()
    }

    fn g2_from_bytes(&self, b: &[u8]) -> Option<ToyElement> {
        self.element(b)
    }
}

/// Deterministic Miller-Rabin; these bases are exact for all `u64`.
fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for a in BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_composite_and_tiny_orders() {
        for q in [0, 1, 2, 4, 9, 15, 21, 561, 1 << 62] {
            assert!(Toy::new(q).is_err(), "{q}");
        }
        for q in [3, 13, 101, 7919, (1 << 61) - 1] {
            assert!(Toy::new(q).is_ok(), "{q}");
        }
    }

    #[test]
    fn pairing_three_four_mod_thirteen() {
        let t = Toy::new(13).unwrap();
        assert_eq!(t.pairing(&ToyElement(3), &ToyElement(4)), ToyElement(12));
    }

    #[test]
    fn inverse_of_three_mod_thirteen_is_nine() {
        let t = Toy::new(13).unwrap();
        assert_eq!(t.scalar_inv(&3), Some(9));
        assert_eq!(t.scalar_inv(&0), None);
    }

    #[test]
    fn element_decoding_rejects_out_of_range() {
        let t = Toy::new(13).unwrap();
        assert_eq!(t.g1_from_bytes(&12u64.to_be_bytes()), Some(ToyElement(12)));
        assert_eq!(t.g1_from_bytes(&13u64.to_be_bytes()), None);
        assert_eq!(t.g1_from_bytes(&[0; 7]), None);
        assert_eq!(t.g1_to_bytes(&ToyElement(0)), vec![0; 8]);
    }
}
