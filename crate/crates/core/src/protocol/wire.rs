//! Frame layout: `len:u32 || msg_type:u8 || session_id[16] || body`, where
//! `len` counts every byte after itself.

use crate::biometric::CHALLENGE_BYTES;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::group::{PairingGroup, SystemParams};
use crate::identity::{MetaverseIdentityToken, PhysicalIdentity, VirtualIdentity};

pub const SESSION_ID_LEN: usize = 16;
pub const MAC_LEN: usize = 32;
/// Frames longer than this are refused before any allocation.
pub const MAX_FRAME_LEN: usize = 1 << 20;

pub type SessionId = [u8; SESSION_ID_LEN];
pub type Nonce = [u8; CHALLENGE_BYTES];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Claim = 1,
    ChallengeMsg = 2,
    Response = 3,
    CounterClaim = 4,
    ResponseWithChallenge = 5,
    ResponseWithKeyShare = 6,
    KeyConfirm = 7,
    Accept = 8,
    Abort = 9,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MsgType::*;
        Some(match v {
            1 => Claim,
            2 => ChallengeMsg,
            3 => Response,
            4 => CounterClaim,
            5 => ResponseWithChallenge,
            6 => ResponseWithKeyShare,
            7 => KeyConfirm,
            8 => Accept,
            9 => Abort,
            _ => return None,
        })
    }
}

/// One-byte abort codes. Codes 1 to 5 name the verifier step that failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AbortReason {
    /// (a) token signature invalid or token not on the ledger.
    BadMit = 1,
    /// (b) virtual identity does not collide with the token.
    BadVid = 2,
    /// (d) watermark does not carry the pending, unused challenge.
    Freshness = 3,
    /// (e) feature does not match the enrolled template.
    BiometricMismatch = 4,
    /// (f) physical identity does not collide with the token.
    BadPid = 5,
    Timeout = 6,
    OutOfPhase = 7,
    Malformed = 8,
    KeyConfirmation = 9,
}

impl AbortReason {
    pub fn from_u8(v: u8) -> Option<Self> {
        use AbortReason::*;
        Some(match v {
            1 => BadMit,
            2 => BadVid,
            3 => Freshness,
            4 => BiometricMismatch,
            5 => BadPid,
            6 => Timeout,
            7 => OutOfPhase,
            8 => Malformed,
            9 => KeyConfirmation,
            _ => return None,
        })
    }

    /// Verifier step letter, for the reasons that map to one.
    pub fn step(self) -> Option<char> {
        match self {
            AbortReason::BadMit => Some('a'),
            AbortReason::BadVid => Some('b'),
            AbortReason::Freshness => Some('d'),
            AbortReason::BiometricMismatch => Some('e'),
            AbortReason::BadPid => Some('f'),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AbortReason::BadMit => "bad-mit",
            AbortReason::BadVid => "bad-vid",
            AbortReason::Freshness => "freshness",
            AbortReason::BiometricMismatch => "biometric-mismatch",
            AbortReason::BadPid => "bad-pid",
            AbortReason::Timeout => "timeout",
            AbortReason::OutOfPhase => "out-of-phase",
            AbortReason::Malformed => "malformed",
            AbortReason::KeyConfirmation => "key-confirmation",
        }
    }
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body<G: PairingGroup> {
    Claim {
        mit: MetaverseIdentityToken<G>,
        vid: VirtualIdentity<G>,
    },
    Challenge {
        nonce: Nonce,
    },
    Response {
        pid: PhysicalIdentity<G>,
    },
    CounterClaim {
        mit: MetaverseIdentityToken<G>,
        vid: VirtualIdentity<G>,
        nonce: Nonce,
    },
    ResponseWithChallenge {
        pid: PhysicalIdentity<G>,
        nonce: Nonce,
    },
    ResponseWithKeyShare {
        pid: PhysicalIdentity<G>,
        key_share: G::G1,
    },
    KeyConfirm {
        tag: [u8; MAC_LEN],
    },
    Accept,
    Abort {
        reason: AbortReason,
    },
}

impl<G: PairingGroup> Body<G> {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Body::Claim { .. } => MsgType::Claim,
            Body::Challenge { .. } => MsgType::ChallengeMsg,
            Body::Response { .. } => MsgType::Response,
            Body::CounterClaim { .. } => MsgType::CounterClaim,
            Body::ResponseWithChallenge { .. } => MsgType::ResponseWithChallenge,
            Body::ResponseWithKeyShare { .. } => MsgType::ResponseWithKeyShare,
            Body::KeyConfirm { .. } => MsgType::KeyConfirm,
            Body::Accept => MsgType::Accept,
            Body::Abort { .. } => MsgType::Abort,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage<G: PairingGroup> {
    pub session_id: SessionId,
    pub body: Body<G>,
}

impl<G: PairingGroup> ProtocolMessage<G> {
    pub fn new(session_id: SessionId, body: Body<G>) -> Self {
        ProtocolMessage { session_id, body }
    }

    pub fn msg_type(&self) -> MsgType {
        self.body.msg_type()
    }

    pub fn encode(&self, params: &SystemParams<G>) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.msg_type() as u8).fixed(&self.session_id);
        match &self.body {
            Body::Claim { mit, vid } => {
                w.bytes(&mit.to_bytes(params));
                vid.encode(params, &mut w);
            }
            Body::Challenge { nonce } => {
                w.fixed(nonce);
            }
            Body::Response { pid } => pid.encode(params, &mut w),
            Body::CounterClaim { mit, vid, nonce } => {
                w.bytes(&mit.to_bytes(params));
                vid.encode(params, &mut w);
                w.fixed(nonce);
            }
            Body::ResponseWithChallenge { pid, nonce } => {
                pid.encode(params, &mut w);
                w.fixed(nonce);
            }
            Body::ResponseWithKeyShare { pid, key_share } => {
                pid.encode(params, &mut w);
                w.fixed(&params.encode_g1(key_share));
            }
            Body::KeyConfirm { tag } => {
                w.fixed(tag);
            }
            Body::Accept => {}
            Body::Abort { reason } => {
                w.u8(*reason as u8);
            }
        }
        let inner = w.finish();
        let mut frame = Vec::with_capacity(4 + inner.len());
        frame.extend_from_slice(&(inner.len() as u32).to_be_bytes());
        frame.extend_from_slice(&inner);
        frame
    }

    /// Decodes one complete frame, length prefix included.
    pub fn decode(params: &SystemParams<G>, frame: &[u8]) -> Result<Self> {
        let mut r = Reader::new(frame);
        let len = r.u32()? as usize;
        if len != r.remaining() || len > MAX_FRAME_LEN {
            return Err(Error::Encoding("frame length"));
        }
        let msg_type = MsgType::from_u8(r.u8()?).ok_or(Error::Encoding("message type"))?;
        let session_id = r.array::<SESSION_ID_LEN>()?;
        let g1_len = params.group().g1_len();
        let read_mit = |r: &mut Reader<'_>| MetaverseIdentityToken::from_bytes(params, r.bytes()?);
        let body = match msg_type {
            MsgType::Claim => Body::Claim {
                mit: read_mit(&mut r)?,
                vid: VirtualIdentity::decode(params, &mut r)?,
            },
            MsgType::ChallengeMsg => Body::Challenge { nonce: r.array()? },
            MsgType::Response => Body::Response {
                pid: PhysicalIdentity::decode(params, &mut r)?,
            },
            MsgType::CounterClaim => Body::CounterClaim {
                mit: read_mit(&mut r)?,
                vid: VirtualIdentity::decode(params, &mut r)?,
                nonce: r.array()?,
            },
            MsgType::ResponseWithChallenge => Body::ResponseWithChallenge {
                pid: PhysicalIdentity::decode(params, &mut r)?,
                nonce: r.array()?,
            },
            MsgType::ResponseWithKeyShare => {
                let pid = PhysicalIdentity::decode(params, &mut r)?;
                let key_share = params.decode_g1(r.fixed(g1_len)?)?;
                if params.g1_is_identity(&key_share) {
                    return Err(Error::IdentityElement);
                }
                Body::ResponseWithKeyShare { pid, key_share }
            }
            MsgType::KeyConfirm => Body::KeyConfirm { tag: r.array()? },
            MsgType::Accept => Body::Accept,
            MsgType::Abort => Body::Abort {
                reason: AbortReason::from_u8(r.u8()?).ok_or(Error::Encoding("abort reason"))?,
            },
        };
        r.finish()?;
        Ok(ProtocolMessage { session_id, body })
    }
}

/// One hex-encoded frame per line.
pub fn dump_frames<'a>(frames: impl IntoIterator<Item = &'a Vec<u8>>) -> String {
    frames.into_iter().map(|f| hex::encode(f) + "\n").collect()
}

pub fn parse_dump(text: &str) -> Result<Vec<Vec<u8>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| hex::decode(l.trim()).map_err(|_| Error::Encoding("hex frame")))
        .collect()
}
