//! Traceable avatar authentication built on a chameleon collision signature.
//!
//! * [`group`]: pairing-group backends (BLS12-381 and an exponent-arithmetic
//!   toy group) with operation counting.
//! * [`chameleon`]: the six-algorithm chameleon collision signature.
//! * [`biometric`]: synthetic iris codes, Hamming matching and challenge
//!   watermarks.
//! * [`identity`]: identity tokens, virtual and physical identities, the
//!   identity provider and its ledger.
//! * [`protocol`]: one-party and two-party authentication state machines.
//! * [`tracing`]: disclosure of a misbehaving avatar's registered identity.
//! * [`sim`]: a populated world of registered players and no-key forgeries.

pub mod biometric;
pub mod chameleon;
pub mod codec;
pub mod error;
pub mod group;
pub mod identity;
pub mod protocol;
pub mod sim;
pub mod tracing;

pub use error::{Error, Result};
