use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported security level: {0} bits")]
    UnsupportedSecurityLevel(u32),
    #[error("toy group order {0} is not an odd prime below 2^62")]
    InvalidToyOrder(u64),
    #[error("invalid encoding: {0}")]
    Encoding(&'static str),
    #[error("scalar must be nonzero")]
    ZeroScalar,
    #[error("identity element where a non-identity element is required")]
    IdentityElement,
    #[error("degenerate base: h / H(M') is the identity")]
    DegenerateBase,
    #[error("noise rate {0} outside [0, 0.5)")]
    InvalidNoiseRate(f64),
    #[error("feature already carries a watermark")]
    AlreadyWatermarked,
    #[error("feature carries no watermark")]
    NotWatermarked,
    #[error("public key halves are inconsistent")]
    InvalidPublicKey,
    #[error("anonymous identity must be nonempty")]
    EmptyAnonymousId,
    #[error("anonymous identity already registered")]
    DuplicateAnonymousId,
    #[error("unknown ledger entry")]
    UnknownEntry,
    #[error("ledger hash chain broken at entry {0}")]
    BrokenChain(u64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
