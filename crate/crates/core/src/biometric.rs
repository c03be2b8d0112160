//! Synthetic iris codes.
//!
//! Templates are uniform 2048-bit codes; a capture flips each bit
//! independently with the configured noise rate. Matching uses the fractional
//! Hamming distance. A challenge nonce is watermarked into a feature by
//! overwriting 128 bit positions chosen by a salt-keyed PRF, which makes
//! extraction exact and bounds the perturbation to 128 bits.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const CODE_BITS: usize = 2048;
pub const CODE_BYTES: usize = CODE_BITS / 8;
pub const CHALLENGE_BITS: usize = 128;
pub const CHALLENGE_BYTES: usize = CHALLENGE_BITS / 8;
pub const DEFAULT_NOISE: f64 = 0.10;
pub const DEFAULT_THRESHOLD: f64 = 0.32;

const WATERMARK_DST: &[u8] = b"CHAMAUTH-WM-v1";

/// A fixed-length iris code, bit `i` is the MSB-first bit of byte `i / 8`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct IrisCode([u8; CODE_BYTES]);

impl std::fmt::Debug for IrisCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IrisCode({}..)", hex::encode(&self.0[..8]))
    }
}

impl IrisCode {
    pub fn from_bytes(bytes: [u8; CODE_BYTES]) -> Self {
        IrisCode(bytes)
    }

    pub fn random(rng: &mut dyn RngCore) -> Self {
        let mut b = [0u8; CODE_BYTES];
        rng.fill_bytes(&mut b);
        IrisCode(b)
    }

    pub fn as_bytes(&self) -> &[u8; CODE_BYTES] {
        &self.0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, v: bool) {
        let mask = 1 << (7 - i % 8);
        if v {
            self.0[i / 8] |= mask;
        } else {
            self.0[i / 8] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, i: usize) {
        self.0[i / 8] ^= 1 << (7 - i % 8);
    }

    pub fn hamming(&self, other: &IrisCode) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn fractional_hd(&self, other: &IrisCode) -> f64 {
        self.hamming(other) as f64 / CODE_BITS as f64
    }

    /// File and wire format: 4-byte big-endian byte count, then the code.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let code = Self::read(&mut r)?;
        r.finish()?;
        Ok(code)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let body = r.bytes()?;
        let arr: [u8; CODE_BYTES] = body
            .try_into()
            .map_err(|_| Error::Encoding("iris code length"))?;
        Ok(IrisCode(arr))
    }
}

/// Enrolled biometric template `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioTemplate {
    pub code: IrisCode,
    pub subject_id: String,
}

impl BioTemplate {
    pub fn new(code: IrisCode, subject_id: impl Into<String>) -> Self {
        BioTemplate {
            code,
            subject_id: subject_id.into(),
        }
    }
}

/// A captured feature, possibly carrying a challenge watermark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioFeature {
    pub code: IrisCode,
    pub watermark_present: bool,
}

/// A verifier challenge: 128 random bits and the time it was issued.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; CHALLENGE_BYTES],
    pub issued_at: Instant,
}

impl Challenge {
    pub fn fresh(rng: &mut dyn RngCore, issued_at: Instant) -> Self {
        let mut nonce = [0u8; CHALLENGE_BYTES];
        rng.fill_bytes(&mut nonce);
        Challenge { nonce, issued_at }
    }
}

pub fn gen_template(seed: u64) -> BioTemplate {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    BioTemplate::new(IrisCode::random(&mut rng), format!("subject-{seed}"))
}

/// Samples a noisy reading of `template`.
pub fn capture(
    template: &BioTemplate,
    noise_rate: f64,
    rng: &mut dyn RngCore,
) -> Result<BioFeature> {
    if !(0.0..0.5).contains(&noise_rate) {
        return Err(Error::InvalidNoiseRate(noise_rate));
    }
    let mut code = template.code;
    for i in 0..CODE_BITS {
        if rng.gen_bool(noise_rate) {
            code.flip_bit(i);
        }
    }
    Ok(BioFeature {
        code,
        watermark_present: false,
    })
}

/// The 128 distinct bit positions selected by `salt`, in embedding order.
pub fn watermark_positions(salt: &[u8]) -> Vec<usize> {
    let mut seen = HashSet::with_capacity(CHALLENGE_BITS);
    let mut out = Vec::with_capacity(CHALLENGE_BITS);
    for ctr in 0u32.. {
        let block = Sha256::new()
            .chain_update(WATERMARK_DST)
            .chain_update((salt.len() as u32).to_be_bytes())
            .chain_update(salt)
            .chain_update(ctr.to_be_bytes())
            .finalize();
        for pair in block.chunks_exact(2) {
            let pos = (u16::from_be_bytes([pair[0], pair[1]]) as usize) % CODE_BITS;
            if seen.insert(pos) {
                out.push(pos);
                if out.len() == CHALLENGE_BITS {
                    return out;
                }
            }
        }
    }
    unreachable!()
}

fn challenge_bit(nonce: &[u8; CHALLENGE_BYTES], i: usize) -> bool {
    nonce[i / 8] >> (7 - i % 8) & 1 == 1
}

pub fn embed_watermark(
    feature: &BioFeature,
    nonce: &[u8; CHALLENGE_BYTES],
    salt: &[u8],
) -> Result<BioFeature> {
    if feature.watermark_present {
        return Err(Error::AlreadyWatermarked);
    }
    let mut code = feature.code;
    for (i, pos) in watermark_positions(salt).into_iter().enumerate() {
        code.set_bit(pos, challenge_bit(nonce, i));
    }
    Ok(BioFeature {
        code,
        watermark_present: true,
    })
}

pub fn extract_watermark(feature: &BioFeature, salt: &[u8]) -> Result<[u8; CHALLENGE_BYTES]> {
    if !feature.watermark_present {
        return Err(Error::NotWatermarked);
    }
    let mut nonce = [0u8; CHALLENGE_BYTES];
    for (i, pos) in watermark_positions(salt).into_iter().enumerate() {
        if feature.code.bit(pos) {
            nonce[i / 8] |= 1 << (7 - i % 8);
        }
    }
    Ok(nonce)
}

/// Accepts when the fractional Hamming distance is at most `threshold`.
/// Both codes are fixed at [`CODE_BITS`], so lengths always agree.
pub fn matches(feature: &BioFeature, template: &BioTemplate, threshold: f64) -> bool {
    feature.code.fractional_hd(&template.code) <= threshold
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub trials: usize,
    pub noise: f64,
    pub thresholds: Vec<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            trials: 1000,
            noise: DEFAULT_NOISE,
            thresholds: vec![0.20, 0.25, 0.30, 0.32, 0.35, 0.40, 0.45],
            seed: 0,
        }
    }
}

/// Error rates at one threshold, for native and watermarked responses.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub threshold: f64,
    pub frr_native: f64,
    pub frr_watermarked: f64,
    pub far_native: f64,
    pub far_watermarked: f64,
    /// Fraction of genuine trials where embedding did not change the decision.
    pub genuine_agreement: f64,
}

impl RateRow {
    /// Largest absolute difference between the native and watermarked rates.
    pub fn max_gap(&self) -> f64 {
        (self.frr_native - self.frr_watermarked)
            .abs()
            .max((self.far_native - self.far_watermarked).abs())
    }
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub trials: usize,
    pub rows: Vec<RateRow>,
    pub roundtrip_failures: usize,
    pub max_embed_flips: u32,
}

/// Genuine and impostor matching of native and watermarked captures.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n_thr = cfg.thresholds.len();
    let mut genuine_native = vec![0usize; n_thr];
    let mut genuine_wm = vec![0usize; n_thr];
    let mut impostor_native = vec![0usize; n_thr];
    let mut impostor_wm = vec![0usize; n_thr];
    let mut agree = vec![0usize; n_thr];
    let mut roundtrip_failures = 0;
    let mut max_embed_flips = 0;

    for _ in 0..cfg.trials {
        let enrolled = BioTemplate::new(IrisCode::random(&mut rng), "enrolled");
        let other = BioTemplate::new(IrisCode::random(&mut rng), "other");
        let genuine = capture(&enrolled, cfg.noise, &mut rng)?;
        let impostor = capture(&other, cfg.noise, &mut rng)?;

        let mut nonce = [0u8; CHALLENGE_BYTES];
        rng.fill_bytes(&mut nonce);
        let salt: [u8; 16] = rng.gen();
        let genuine_w = embed_watermark(&genuine, &nonce, &salt)?;
        let impostor_w = embed_watermark(&impostor, &nonce, &salt)?;
        if extract_watermark(&genuine_w, &salt)? != nonce {
            roundtrip_failures += 1;
        }
        max_embed_flips = max_embed_flips.max(genuine_w.code.hamming(&genuine.code));

        for (k, &t) in cfg.thresholds.iter().enumerate() {
            let gn = matches(&genuine, &enrolled, t);
            let gw = matches(&genuine_w, &enrolled, t);
            genuine_native[k] += gn as usize;
            genuine_wm[k] += gw as usize;
            agree[k] += (gn == gw) as usize;
            impostor_native[k] += matches(&impostor, &enrolled, t) as usize;
            impostor_wm[k] += matches(&impostor_w, &enrolled, t) as usize;
        }
    }

    let n = cfg.trials.max(1) as f64;
    let rows = cfg
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| RateRow {
            threshold,
            frr_native: 1.0 - genuine_native[k] as f64 / n,
            frr_watermarked: 1.0 - genuine_wm[k] as f64 / n,
            far_native: impostor_native[k] as f64 / n,
            far_watermarked: impostor_wm[k] as f64 / n,
            genuine_agreement: agree[k] as f64 / n,
        })
        .collect();
    Ok(SimReport {
        trials: cfg.trials,
        rows,
        roundtrip_failures,
        max_embed_flips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn feature_of(t: &BioTemplate) -> BioFeature {
        BioFeature {
            code: t.code,
            watermark_present: false,
        }
    }

    #[test]
    fn template_is_deterministic_and_full_length() {
        assert_eq!(gen_template(9), gen_template(9));
        assert_ne!(gen_template(9).code, gen_template(10).code);
        assert_eq!(gen_template(9).code.as_bytes().len() * 8, 2048);
    }

    #[test]
    fn random_templates_sit_near_half() {
        // Binomial(2048, 1/2) has std 0.011 in fractional terms; 0.05 is > 4.5 sigma.
        for s in 0..1000u64 {
            let d = gen_template(2 * s)
                .code
                .fractional_hd(&gen_template(2 * s + 1).code);
            assert!((0.45..=0.55).contains(&d), "seed {s}: {d}");
        }
    }

    #[test]
    fn zero_noise_capture_is_exact() {
        let t = gen_template(1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(capture(&t, 0.0, &mut rng).unwrap().code, t.code);
    }

    #[test]
    fn noise_rate_bounds() {
        let t = gen_template(1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            capture(&t, 0.6, &mut rng),
            Err(Error::InvalidNoiseRate(_))
        ));
        assert!(capture(&t, 0.5, &mut rng).is_err());
        assert!(capture(&t, -0.1, &mut rng).is_err());
    }

    #[test]
    fn ten_percent_noise_lands_near_ten_percent() {
        let t = gen_template(4);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let f = capture(&t, 0.10, &mut rng).unwrap();
            let d = f.code.fractional_hd(&t.code);
            assert!((0.07..=0.13).contains(&d), "{d}");
        }
    }

    #[test]
    fn double_embed_and_bare_extract_rejected() {
        let t = gen_template(2);
        let f = feature_of(&t);
        assert!(matches!(
            extract_watermark(&f, b"s"),
            Err(Error::NotWatermarked)
        ));
        let w = embed_watermark(&f, &[7; 16], b"s").unwrap();
        assert!(matches!(
            embed_watermark(&w, &[7; 16], b"s"),
            Err(Error::AlreadyWatermarked)
        ));
    }

    #[test]
    fn positions_distinct_and_salt_dependent() {
        let a = watermark_positions(b"salt-a");
        let b = watermark_positions(b"salt-b");
        assert_eq!(a.len(), 128);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 128);
        assert!(a.iter().all(|&p| p < CODE_BITS));
        assert_ne!(a, b);
    }

    #[test]
    fn wrong_salt_does_not_recover_challenge() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let f = feature_of(&BioTemplate::new(IrisCode::random(&mut rng), "x"));
            let c: [u8; 16] = rng.gen();
            let s: [u8; 16] = rng.gen();
            let s2: [u8; 16] = rng.gen();
            let w = embed_watermark(&f, &c, &s).unwrap();
            assert_ne!(extract_watermark(&w, &s2).unwrap(), c);
        }
    }

    #[test]
    fn identical_feature_matches_at_zero() {
        let t = gen_template(3);
        assert!(matches(&feature_of(&t), &t, 0.0));
    }

    #[test]
    fn file_encoding() {
        let t = gen_template(5);
        let enc = t.code.encode();
        assert_eq!(enc.len(), 4 + 256);
        assert_eq!(&enc[..4], &[0, 0, 1, 0]);
        assert_eq!(IrisCode::decode(&enc).unwrap(), t.code);
        assert!(IrisCode::decode(&enc[..200]).is_err());
        let mut short = Writer::new();
        short.bytes(&[0u8; 255]);
        assert!(IrisCode::decode(&short.finish()).is_err());
    }

    proptest! {
        #[test]
        fn watermark_round_trip(code in prop::array::uniform32(any::<u8>()),
                                seed in any::<u64>(),
                                nonce in prop::array::uniform16(any::<u8>()),
                                salt in prop::collection::vec(any::<u8>(), 0..32)) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut c = IrisCode::random(&mut rng);
            c.0[..32].copy_from_slice(&code);
            let f = BioFeature { code: c, watermark_present: false };
            let w = embed_watermark(&f, &nonce, &salt).unwrap();
            prop_assert_eq!(extract_watermark(&w, &salt).unwrap(), nonce);
            prop_assert!(w.code.hamming(&f.code) <= 128);
        }
    }
}
