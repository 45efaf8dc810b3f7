//! EBAKE-SE: authenticated key exchange between two industrial IoT devices
//! brokered by a trusted authority, with secrets held in a secure element.
//!
//! The crate also carries a certificate-based baseline scheme (`das`) as an
//! attack target, a Dolev-Yao channel adversary with scripted attacks, an
//! in-process publish/subscribe broker, and an operation-count benchmark.
//!
//! Layout:
//! - [`crypto`]: P-256, SHA-256, AES-GCM, hybrid encryption, op counters
//! - [`codec`]: canonical field encoding and the transport envelope
//! - [`ebake`]: trusted authority, secure element, device state machines
//! - [`das`]: the reference certificate scheme
//! - [`transport`]: broker, delivery modes and metrics
//! - [`network`]: handshake drivers wiring protocol nodes to the broker
//! - [`adversary`]: transcript capture, corruption, attack scripts
//! - [`bench`]: counted handshakes, primitive timing, cost prediction

pub mod adversary;
pub mod bench;
pub mod clock;
pub mod codec;
pub mod crypto;
pub mod das;
pub mod ebake;
mod hexser;
pub mod id;
pub mod network;
pub mod transport;

pub use clock::{Clock, ManualClock, SystemClock};
pub use id::{CorrelationId, DeviceId, Timestamp};

/// Deterministic cryptographic RNG used when a seed is supplied.
pub type SeededRng = rand_chacha::ChaCha20Rng;
