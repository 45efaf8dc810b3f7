//! EBAKE-SE: device-to-device key agreement brokered by a trusted authority.
//!
//! Message flow for initiator `D_x`, trusted authority `TA`, responder `D_y`:
//!
//! ```text
//! D_x -> TA : M1 = <W, Y, Z, P_dx, T1>          (ebake/ta/inbox)
//! TA  -> D_y: M2 = <Z, P_dy, T2>                (D_y inbox)
//! D_y -> TA : M3 = <Z_y, P_dTA, T3>             (ebake/ta/inbox)
//! TA  -> D_x: M4 = <Z_y, P_dxx, T4, topic>      (D_x inbox)
//! TA  -> D_y: topic notice = <topic, T4>        (D_y inbox)
//! ```
//!
//! Device secrets live in a [`SecureElement`]; protocol code only calls its
//! operations. The TA verifies both devices but never sees either nonce, so
//! it cannot derive the session key.

mod blocklist;
mod device;
mod messages;
pub mod registry;
mod se;
mod ta;
pub mod topics;

use serde::{Deserialize, Serialize};

pub use blocklist::{BlockList, BlockState, Peer};
pub use device::{Device, DeviceEvent, InitiatorPending, ResponderPending};
pub use messages::{AppMessage, Msg1, Msg2, Msg3, Msg4, TopicNotice, Y_LEN};
pub use registry::RegistryFile;
pub use se::{derive_session_key, DeviceCredentials, ExposedDeviceData, SecureElement, SessionInputs};
pub use ta::{Outgoing, TaDeviceRecord, TaEvent, TrustedAuthority};

use crate::crypto::{CryptoError, Digest};
use crate::id::{DeviceId, Timestamp};

/// Default freshness window Δ in milliseconds.
pub const DEFAULT_FRESHNESS_MS: u64 = 5_000;
/// Default block duration: one day.
pub const DEFAULT_BLOCK_MS: u64 = 86_400_000;
/// Consecutive failures that trigger a block.
pub const BLOCK_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Freshness window Δ (ms).
    pub freshness_ms: u64,
    /// How long a peer stays blocked after three failures (ms).
    pub block_ms: u64,
    /// Reject a second M1 carrying an already seen `(P_dx, T1)` pair.
    pub replay_cache: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            freshness_ms: DEFAULT_FRESHNESS_MS,
            block_ms: DEFAULT_BLOCK_MS,
            replay_cache: false,
        }
    }
}

impl ProtocolConfig {
    /// Pending sessions expire after 2Δ.
    pub fn pending_ttl_ms(&self) -> u64 {
        self.freshness_ms.saturating_mul(2)
    }

    /// An initiator gives up after 4Δ.
    pub fn handshake_timeout_ms(&self) -> u64 {
        self.freshness_ms.saturating_mul(4)
    }

    pub fn is_fresh(&self, t: Timestamp, now: Timestamp) -> bool {
        now.abs_diff(t) <= self.freshness_ms
    }
}

/// Why a protocol step refused a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    #[error("peer is blocked")]
    Blocked,
    #[error("timestamp outside the freshness window")]
    StaleTimestamp,
    #[error("symmetric authentication failed")]
    SymAuthentication,
    #[error("verifier tag mismatch")]
    TagMismatch,
    #[error("hybrid decryption failed")]
    Decryption,
    #[error("unknown device")]
    UnknownDevice,
    #[error("unmasked responder key is not registered")]
    UnknownResponder,
    #[error("recovered identity does not match the intended peer")]
    IdentityMismatch,
    #[error("no pending session")]
    MissingPending,
    #[error("malformed message")]
    Malformed,
    #[error("replayed message")]
    Replay,
    #[error("devices hold different K_dta generations")]
    KeyGenerationMismatch,
    #[error("handshake timed out")]
    Timeout,
    #[error("entropy source failed")]
    Entropy,
}

impl FailureReason {
    /// Failures that count toward blocking the sender.
    pub fn counts_against_peer(self) -> bool {
        !matches!(self, FailureReason::Blocked | FailureReason::Entropy | FailureReason::Timeout)
    }
}

/// The protocol step at which processing happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    InitiatorStart,
    TaMsg1,
    ResponderMsg2,
    TaMsg3,
    InitiatorMsg4,
    ResponderTopic,
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Step::InitiatorStart => "step 1 (initiator start)",
            Step::TaMsg1 => "step 2 (TA verifies M1)",
            Step::ResponderMsg2 => "step 3 (responder verifies M2)",
            Step::TaMsg3 => "step 4 (TA verifies M3)",
            Step::InitiatorMsg4 => "step 5 (initiator verifies M4)",
            Step::ResponderTopic => "responder topic notice",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{step}: {reason}")]
pub struct ProtocolError {
    pub step: Step,
    pub reason: FailureReason,
}

impl ProtocolError {
    pub fn new(step: Step, reason: FailureReason) -> Self {
        ProtocolError { step, reason }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EbakeError {
    #[error("identity {0} is already registered")]
    DuplicateIdentity(DeviceId),
    #[error("identity {0} is not registered")]
    UnknownIdentity(DeviceId),
    #[error("credential check failed: {0}")]
    InvalidCredentials(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("registry: {0}")]
    Registry(String),
}

/// Output of a completed handshake.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    key: Digest,
    pub topic: String,
    pub peer: DeviceId,
    pub established_at: Timestamp,
}

impl SessionKey {
    pub(crate) fn new(key: Digest, topic: String, peer: DeviceId, established_at: Timestamp) -> Self {
        SessionKey {
            key,
            topic,
            peer,
            established_at,
        }
    }

    pub fn key(&self) -> &Digest {
        &self.key
    }

    /// First 8 hex characters of SHA-256(SK); safe to print.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.key)
    }
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKey")
            .field("fingerprint", &self.fingerprint())
            .field("topic", &self.topic)
            .field("peer", &self.peer)
            .field("established_at", &self.established_at)
            .finish()
    }
}

pub fn fingerprint(key: &Digest) -> String {
    use sha2::{Digest as _, Sha256};
    hex::encode(&Sha256::digest(key.as_bytes())[..4])
}
