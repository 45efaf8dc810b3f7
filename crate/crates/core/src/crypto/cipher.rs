//! Symmetric AEAD under the shared device/TA key, and ECIES-style hybrid
//! encryption to a curve point.

use aes_gcm::aead::{Aead, AeadInPlace, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::counters::{bump, Op};
use super::group::{mul_uncounted, Point, Scalar, POINT_LEN};
use super::hash::hash_uncounted;
use super::rng::{fill, random_scalar};
use super::CryptoError;
use crate::codec::Field;

pub const SYM_KEY_LEN: usize = 20;
pub const AEAD_NONCE_LEN: usize = 12;
pub const AEAD_TAG_LEN: usize = 16;

fn nonce_from(slice: &[u8]) -> Nonce<aes_gcm::aead::consts::U12> {
    let arr: [u8; AEAD_NONCE_LEN] = slice.try_into().expect("nonce length checked by caller");
    Nonce::from(arr)
}

/// 160-bit shared secret plus the AES-256 key derived from it.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SymKeyRepr", into = "SymKeyRepr")]
pub struct SymKey {
    raw: [u8; SYM_KEY_LEN],
    cipher_key: [u8; 32],
}

#[derive(Serialize, Deserialize)]
struct SymKeyRepr(#[serde(with = "crate::hexser::array")] [u8; SYM_KEY_LEN]);

impl From<SymKeyRepr> for SymKey {
    fn from(r: SymKeyRepr) -> SymKey {
        SymKey::from_raw(r.0)
    }
}

impl From<SymKey> for SymKeyRepr {
    fn from(k: SymKey) -> SymKeyRepr {
        SymKeyRepr(k.raw)
    }
}

impl SymKey {
    pub fn from_raw(raw: [u8; SYM_KEY_LEN]) -> SymKey {
        let cipher_key = hash_uncounted("EBAKE-symkey", &[Field::Bytes(raw.to_vec())]).0;
        SymKey { raw, cipher_key }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<SymKey, CryptoError> {
        let mut raw = [0u8; SYM_KEY_LEN];
        fill(rng, &mut raw)?;
        Ok(SymKey::from_raw(raw))
    }

    pub fn raw(&self) -> &[u8; SYM_KEY_LEN] {
        &self.raw
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new_from_slice(&self.cipher_key).expect("32-byte key")
    }
}

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymKey(..)")
    }
}

/// AES-256-GCM with a random 12-byte nonce prepended: `nonce ‖ ct ‖ tag`.
pub fn sym_encrypt<R: RngCore + CryptoRng>(
    k: &SymKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, CryptoError> {
    bump(Op::Sym);
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    fill(rng, &mut nonce)?;
    let body = k
        .cipher()
        .encrypt(&Nonce::from(nonce), plaintext)
        .map_err(|_| CryptoError::Authentication)?;
    let mut out = Vec::with_capacity(AEAD_NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn sym_decrypt(k: &SymKey, ct: &[u8]) -> Result<Vec<u8>, CryptoError> {
    bump(Op::Sym);
    if ct.len() < AEAD_NONCE_LEN + AEAD_TAG_LEN {
        return Err(CryptoError::Authentication);
    }
    let (nonce, body) = ct.split_at(AEAD_NONCE_LEN);
    k.cipher()
        .decrypt(&nonce_from(nonce), body)
        .map_err(|_| CryptoError::Authentication)
}

/// Ephemeral-ECDH + hash KDF + AES-256-GCM ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HybridCiphertext {
    pub ephemeral: Point,
    pub nonce: [u8; AEAD_NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; AEAD_TAG_LEN],
}

impl HybridCiphertext {
    pub const OVERHEAD: usize = POINT_LEN + AEAD_NONCE_LEN + AEAD_TAG_LEN;

    /// `R(33) ‖ nonce(12) ‖ body ‖ tag(16)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::OVERHEAD + self.body.len());
        out.extend_from_slice(&self.ephemeral.to_compressed());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(raw: &[u8]) -> Result<HybridCiphertext, CryptoError> {
        if raw.len() < Self::OVERHEAD {
            return Err(CryptoError::Decryption);
        }
        let ephemeral = Point::from_compressed(&raw[..POINT_LEN]).map_err(|_| CryptoError::Decryption)?;
        let mut nonce = [0u8; AEAD_NONCE_LEN];
        nonce.copy_from_slice(&raw[POINT_LEN..POINT_LEN + AEAD_NONCE_LEN]);
        let body_end = raw.len() - AEAD_TAG_LEN;
        let mut tag = [0u8; AEAD_TAG_LEN];
        tag.copy_from_slice(&raw[body_end..]);
        Ok(HybridCiphertext {
            ephemeral,
            nonce,
            body: raw[POINT_LEN + AEAD_NONCE_LEN..body_end].to_vec(),
            tag,
        })
    }

    /// Byte range of the encrypted body within [`Self::to_bytes`] output.
    pub fn body_range(encoded_len: usize) -> std::ops::Range<usize> {
        POINT_LEN + AEAD_NONCE_LEN..encoded_len.saturating_sub(AEAD_TAG_LEN)
    }
}

fn hybrid_cipher(shared: &Point, ephemeral: &Point) -> Aes256Gcm {
    let key = hash_uncounted(
        "EBAKE-ecies",
        &[Field::Bytes(shared.x_bytes().to_vec()), Field::Point(ephemeral.to_compressed())],
    );
    Aes256Gcm::new_from_slice(&key.0).expect("32-byte key")
}

/// Encrypt to `public` with a fresh ephemeral scalar.
pub fn asym_encrypt<R: RngCore + CryptoRng>(
    public: &Point,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<HybridCiphertext, CryptoError> {
    bump(Op::Asym);
    if public.is_identity() {
        return Err(CryptoError::InvalidPoint);
    }
    let e = random_scalar(rng)?;
    let ephemeral = mul_uncounted(&e, &Point::generator());
    let shared = mul_uncounted(&e, public);
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    fill(rng, &mut nonce)?;
    let aad = ephemeral.to_compressed();
    let mut body = plaintext.to_vec();
    let tag = hybrid_cipher(&shared, &ephemeral)
        .encrypt_in_place_detached(&Nonce::from(nonce), &aad, &mut body)
        .map_err(|_| CryptoError::Decryption)?;
    Ok(HybridCiphertext {
        ephemeral,
        nonce,
        body,
        tag: tag.into(),
    })
}

pub fn asym_decrypt(private: &Scalar, ct: &HybridCiphertext) -> Result<Vec<u8>, CryptoError> {
    bump(Op::Asym);
    if ct.ephemeral.is_identity() {
        return Err(CryptoError::Decryption);
    }
    let shared = mul_uncounted(private, &ct.ephemeral);
    let aad = ct.ephemeral.to_compressed();
    let mut body = ct.body.clone();
    hybrid_cipher(&shared, &ct.ephemeral)
        .decrypt_in_place_detached(&Nonce::from(ct.nonce), &aad, &mut body, &Tag::from(ct.tag))
        .map_err(|_| CryptoError::Decryption)?;
    Ok(body)
}

/// AEAD seal of application data under an established 32-byte session key.
pub fn seal_with_key<R: RngCore + CryptoRng>(
    key: &[u8; 32],
    aad: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new_from_slice(key).expect("32-byte key");
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    fill(rng, &mut nonce)?;
    let body = cipher
        .encrypt(&Nonce::from(nonce), Payload { msg: plaintext, aad })
        .map_err(|_| CryptoError::Authentication)?;
    let mut out = nonce.to_vec();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn open_with_key(key: &[u8; 32], aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < AEAD_NONCE_LEN + AEAD_TAG_LEN {
        return Err(CryptoError::Authentication);
    }
    let cipher = Aes256Gcm::new_from_slice(key).expect("32-byte key");
    let (nonce, body) = sealed.split_at(AEAD_NONCE_LEN);
    cipher
        .decrypt(&nonce_from(nonce), Payload { msg: body, aad })
        .map_err(|_| CryptoError::Authentication)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::scalar_mult_base;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn sym_roundtrip_and_wrong_key() {
        let mut rng = rng();
        let k = SymKey::generate(&mut rng).unwrap();
        let k2 = SymKey::generate(&mut rng).unwrap();
        let ct = sym_encrypt(&k, b"identity and scalar", &mut rng).unwrap();
        assert_eq!(sym_decrypt(&k, &ct).unwrap(), b"identity and scalar");
        assert_eq!(sym_decrypt(&k2, &ct), Err(CryptoError::Authentication));
        assert_eq!(sym_decrypt(&k, &ct[..20]), Err(CryptoError::Authentication));
    }

    #[test]
    fn sym_every_bit_flip_detected() {
        let mut rng = rng();
        let k = SymKey::generate(&mut rng).unwrap();
        let ct = sym_encrypt(&k, b"0123456789", &mut rng).unwrap();
        for i in 0..ct.len() * 8 {
            let mut bad = ct.clone();
            bad[i / 8] ^= 1 << (i % 8);
            assert_eq!(sym_decrypt(&k, &bad), Err(CryptoError::Authentication), "bit {i}");
        }
    }

    #[test]
    fn symkey_serde_keeps_raw_only() {
        let k = SymKey::from_raw([7u8; 20]);
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, format!("\"{}\"", hex::encode([7u8; 20])));
        let back: SymKey = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn asym_roundtrip_lengths() {
        let mut rng = rng();
        let r = random_scalar(&mut rng).unwrap();
        let q = scalar_mult_base(&r);
        for len in [0usize, 1, 255, 4096] {
            let m: Vec<u8> = (0..len).map(|i| i as u8).collect();
            let ct = asym_encrypt(&q, &m, &mut rng).unwrap();
            let parsed = HybridCiphertext::from_bytes(&ct.to_bytes()).unwrap();
            assert_eq!(parsed, ct);
            assert_eq!(asym_decrypt(&r, &parsed).unwrap(), m);
        }
    }

    #[test]
    fn asym_fresh_ephemeral_and_wrong_key() {
        let mut rng = rng();
        let r = random_scalar(&mut rng).unwrap();
        let q = scalar_mult_base(&r);
        let a = asym_encrypt(&q, b"m", &mut rng).unwrap();
        let b = asym_encrypt(&q, b"m", &mut rng).unwrap();
        assert_ne!(a.ephemeral, b.ephemeral);
        assert_ne!(a.to_bytes(), b.to_bytes());
        let wrong = random_scalar(&mut rng).unwrap();
        assert_eq!(asym_decrypt(&wrong, &a), Err(CryptoError::Decryption));
    }

    #[test]
    fn asym_every_bit_flip_detected() {
        let mut rng = rng();
        let r = random_scalar(&mut rng).unwrap();
        let q = scalar_mult_base(&r);
        let enc = asym_encrypt(&q, b"nonce material", &mut rng).unwrap().to_bytes();
        for i in 0..enc.len() * 8 {
            let mut bad = enc.clone();
            bad[i / 8] ^= 1 << (i % 8);
            let res = HybridCiphertext::from_bytes(&bad).and_then(|ct| asym_decrypt(&r, &ct));
            assert_eq!(res, Err(CryptoError::Decryption), "bit {i}");
        }
    }

    #[test]
    fn asym_rejects_identity_recipient() {
        let mut rng = rng();
        assert!(asym_encrypt(&Point::identity(), b"x", &mut rng).is_err());
    }

    #[test]
    fn session_seal_roundtrip() {
        let mut rng = rng();
        let key = [3u8; 32];
        let s = seal_with_key(&key, b"topic", b"hello", &mut rng).unwrap();
        assert_eq!(open_with_key(&key, b"topic", &s).unwrap(), b"hello");
        assert!(open_with_key(&key, b"other", &s).is_err());
    }
}
