//! Domain-separated SHA-256 over canonically framed fields.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

use super::counters::{bump, Op};
use super::CryptoError;
use crate::codec::{encode_fields, Field};

pub const DIGEST_LEN: usize = 32;

/// Largest output [`expand_mask`] will produce.
pub const MAX_MASK_LEN: usize = 255 * DIGEST_LEN;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Digest(#[serde(with = "crate::hexser::array")] pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Constant-time equality.
    pub fn verify(&self, other: &Digest) -> bool {
        bool::from(self.0.ct_eq(&other.0))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

impl From<Digest> for Field {
    fn from(d: Digest) -> Field {
        Field::Digest(d.0)
    }
}

impl From<&Digest> for Field {
    fn from(d: &Digest) -> Field {
        Field::Digest(d.0)
    }
}

/// `SHA-256(encode([tag, fields...]))`, counted as one hash operation.
pub fn hash(domain_tag: &str, fields: &[Field]) -> Digest {
    bump(Op::Hash);
    hash_uncounted(domain_tag, fields)
}

/// Same digest as [`hash`] for internal key derivations that are not
/// protocol-level hash operations.
pub(crate) fn hash_uncounted(domain_tag: &str, fields: &[Field]) -> Digest {
    let mut framed = Vec::with_capacity(1 + fields.len() + 1);
    framed.push(Field::Str(domain_tag.to_owned()));
    framed.extend_from_slice(fields);
    let enc = encode_fields(&framed);
    Digest(Sha256::digest(enc).into())
}

/// Counter-mode expansion of a digest into `len` mask bytes.
pub fn expand_mask(d: &Digest, len: usize) -> Result<Vec<u8>, CryptoError> {
    if len > MAX_MASK_LEN {
        return Err(CryptoError::MaskTooLong(len));
    }
    let mut out = Vec::with_capacity(len + DIGEST_LEN);
    let mut counter: u8 = 1;
    while out.len() < len {
        let block = hash_uncounted("EBAKE-mask", &[Field::Digest(d.0), Field::Bytes(vec![counter])]);
        out.extend_from_slice(&block.0);
        counter = counter.wrapping_add(1);
    }
    out.truncate(len);
    Ok(out)
}

/// `data ⊕ expand_mask(d, |data|)`. Its own inverse; counted as one XOR.
pub fn xor_mask(d: &Digest, data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    bump(Op::Xor);
    let mask = expand_mask(d, data.len())?;
    Ok(data.iter().zip(mask).map(|(a, b)| a ^ b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let f = [Field::Bytes(b"a".to_vec()), Field::Bytes(b"b".to_vec())];
        assert_eq!(hash("t", &f), hash("t", &f));
    }

    #[test]
    fn framing_separates_concatenation() {
        let split = hash("t", &[Field::Bytes(b"a".to_vec()), Field::Bytes(b"b".to_vec())]);
        let joined = hash("t", &[Field::Bytes(b"ab".to_vec())]);
        assert_ne!(split, joined);
        let swapped = hash("t", &[Field::Bytes(b"b".to_vec()), Field::Bytes(b"a".to_vec())]);
        assert_ne!(split, swapped);
    }

    #[test]
    fn domain_tags_separate() {
        assert_ne!(hash("EBAKE-Pdx", &[]), hash("EBAKE-Pdy", &[]));
    }

    #[test]
    fn empty_field_list_vector() {
        // Oracle: hand-built framing (vector frozen from Python hashlib over the same bytes) 0x01 ‖ 0x07 ‖ len(4) ‖ "EBAKE-test", fed to SHA-256.
        let mut framed = vec![0x01, 0x07, 0, 0, 0, 10];
        framed.extend_from_slice(b"EBAKE-test");
        let oracle: [u8; 32] = Sha256::digest(&framed).into();
        assert_eq!(hash("EBAKE-test", &[]).0, oracle);
        assert_eq!(
            hash("EBAKE-test", &[]).to_hex(),
            "7f37b4e823351e1220e0d5ce34950042fabf9e79414f8a120f16d37d565f8201"
        );
    }

    #[test]
    fn mask_prefix_and_determinism() {
        let d = hash("x", &[]);
        let m32 = expand_mask(&d, 32).unwrap();
        let m33 = expand_mask(&d, 33).unwrap();
        assert_eq!(m32[..], m33[..32]);
        assert_eq!(m33, expand_mask(&d, 33).unwrap());
        assert_eq!(expand_mask(&d, 0).unwrap(), Vec::<u8>::new());
        assert_eq!(expand_mask(&d, MAX_MASK_LEN).unwrap().len(), MAX_MASK_LEN);
        assert!(matches!(expand_mask(&d, MAX_MASK_LEN + 1), Err(CryptoError::MaskTooLong(_))));
    }

    #[test]
    fn masks_differ_across_digests() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        for _ in 0..500 {
            let mut a = [0u8; 32];
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut a);
            rng.fill_bytes(&mut b);
            if a == b {
                continue;
            }
            assert_ne!(expand_mask(&Digest(a), 33).unwrap(), expand_mask(&Digest(b), 33).unwrap());
        }
    }

    #[test]
    fn xor_mask_involution() {
        let d = hash("k", &[]);
        let data: Vec<u8> = (0..33).collect();
        let masked = xor_mask(&d, &data).unwrap();
        assert_ne!(masked, data);
        assert_eq!(xor_mask(&d, &masked).unwrap(), data);
    }
}
