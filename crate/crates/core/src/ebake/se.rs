use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::EbakeError;
use crate::codec::{encode_fields, Field};
use crate::crypto::group::mul_uncounted;
use crate::crypto::hash::hash_uncounted;
use crate::crypto::{asym_decrypt, hash, sym_encrypt, xor_mask, CryptoError, Digest, HybridCiphertext, Point, Scalar, SymKey};
use crate::id::{DeviceId, Timestamp};

/// What the TA provisions onto a device's secure element.
#[derive(Clone, Serialize, Deserialize)]
pub struct DeviceCredentials {
    pub id: DeviceId,
    pub r_d: Scalar,
    pub k_dta: SymKey,
    pub dp1: Digest,
    /// Routing alias used for the device inbox topic.
    #[serde(with = "crate::hexser::array")]
    pub route: [u8; 8],
    pub kdta_generation: u32,
}

impl std::fmt::Debug for DeviceCredentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceCredentials")
            .field("id", &self.id)
            .field("route", &hex::encode(self.route))
            .field("kdta_generation", &self.kdta_generation)
            .finish_non_exhaustive()
    }
}

pub(crate) fn dp1_fields(id: &DeviceId, r_d: &Scalar, k_dta: &SymKey) -> [Field; 3] {
    [
        Field::Id(id.0),
        Field::Scalar(r_d.to_bytes()),
        Field::Bytes(k_dta.raw().to_vec()),
    ]
}

impl DeviceCredentials {
    /// Recompute `DP_1` and compare.
    pub fn check(&self) -> bool {
        hash_uncounted("EBAKE-DP1", &dp1_fields(&self.id, &self.r_d, &self.k_dta)).verify(&self.dp1)
    }
}

/// Everything an attacker with physical access learns from an SE-equipped device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposedDeviceData {
    pub public_key: Point,
    #[serde(with = "crate::hexser::array")]
    pub route: [u8; 8],
}

/// Inputs to the session key, initiator first.
#[derive(Debug, Clone)]
pub struct SessionInputs<'a> {
    pub id_init: DeviceId,
    pub n_init: &'a [u8],
    pub t1: Timestamp,
    pub id_resp: DeviceId,
    pub n_resp: &'a [u8],
    pub t2: Timestamp,
}

pub fn derive_session_key(inputs: &SessionInputs<'_>, k_dta: &SymKey) -> Digest {
    hash(
        "EBAKE-SK",
        &[
            Field::Id(inputs.id_init.0),
            Field::Bytes(inputs.n_init.to_vec()),
            Field::Timestamp(inputs.t1),
            Field::Id(inputs.id_resp.0),
            Field::Bytes(inputs.n_resp.to_vec()),
            Field::Timestamp(inputs.t2),
            Field::Bytes(k_dta.raw().to_vec()),
        ],
    )
}

/// Software stand-in for the tamper-resistant chip. Secrets never leave it;
/// callers only get ciphertexts, masks, tags and derived keys.
pub struct SecureElement {
    creds: DeviceCredentials,
    public_key: Point,
}

impl SecureElement {
    pub fn load(creds: DeviceCredentials) -> Result<SecureElement, EbakeError> {
        if !creds.check() {
            return Err(EbakeError::InvalidCredentials("DP_1 does not match"));
        }
        let public_key = mul_uncounted(&creds.r_d, &Point::generator());
        Ok(SecureElement { creds, public_key })
    }

    pub fn id(&self) -> DeviceId {
        self.creds.id
    }

    pub fn public_key(&self) -> Point {
        self.public_key
    }

    pub fn route(&self) -> [u8; 8] {
        self.creds.route
    }

    pub fn kdta_generation(&self) -> u32 {
        self.creds.kdta_generation
    }

    /// `W = Enc(K_dta, [ID_d, r_d])`.
    pub fn seal_identity<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<Vec<u8>, CryptoError> {
        let pt = encode_fields(&[Field::Id(self.creds.id.0), Field::Scalar(self.creds.r_d.to_bytes())]);
        sym_encrypt(&self.creds.k_dta, &pt, rng)
    }

    /// XOR with the mask expanded from `DP_1`.
    pub fn mask(&self, data: &[u8]) -> Result<Vec<u8>, CryptoError> {
        xor_mask(&self.creds.dp1, data)
    }

    /// `hash(label, [DP_1, extra...])`.
    pub fn verifier_tag(&self, label: &str, extra: &[Field]) -> Digest {
        let mut fields = Vec::with_capacity(extra.len() + 1);
        fields.push(Field::Digest(self.creds.dp1.0));
        fields.extend_from_slice(extra);
        hash(label, &fields)
    }

    pub fn decrypt(&self, ct: &HybridCiphertext) -> Result<Vec<u8>, CryptoError> {
        asym_decrypt(&self.creds.r_d, ct)
    }

    pub fn session_key(&self, inputs: &SessionInputs<'_>) -> Digest {
        derive_session_key(inputs, &self.creds.k_dta)
    }

    /// Physical capture yields public data only.
    pub fn exposed(&self) -> ExposedDeviceData {
        ExposedDeviceData {
            public_key: self.public_key,
            route: self.creds.route,
        }
    }

    /// Export for provisioning files. Not reachable from protocol code.
    pub fn export_credentials(self) -> DeviceCredentials {
        self.creds
    }
}
