//! Primitive layer: P-256 group operations, SHA-256 hashing, AES-GCM and
//! hybrid encryption, randomness and operation counters.

pub mod cipher;
pub mod counters;
pub mod group;
pub mod hash;
pub mod rng;

pub use cipher::{asym_decrypt, asym_encrypt, sym_decrypt, sym_encrypt, HybridCiphertext, SymKey};
pub use counters::OpCounters;
pub use group::{point_add, scalar_mult, scalar_mult_base, CurveParams, Point, Scalar, P256};
pub use hash::{expand_mask, hash, xor_mask, Digest};
pub use rng::{random_nonce, random_scalar, NONCE_LEN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("point is not on the curve or is not a valid encoding")]
    InvalidPoint,
    #[error("scalar out of range")]
    InvalidScalar,
    #[error("scalar reduced to zero")]
    ZeroScalar,
    #[error("symmetric authentication failed")]
    Authentication,
    #[error("hybrid decryption failed")]
    Decryption,
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("mask length {0} exceeds limit")]
    MaskTooLong(usize),
    #[error("unsupported or invalid curve parameters")]
    UnsupportedCurve,
}

impl From<Scalar> for crate::codec::Field {
    fn from(s: Scalar) -> Self {
        crate::codec::Field::Scalar(s.to_bytes())
    }
}

impl From<Point> for crate::codec::Field {
    fn from(p: Point) -> Self {
        crate::codec::Field::Point(p.to_compressed())
    }
}
