use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::Field;

/// Milliseconds since the Unix epoch.
pub type Timestamp = u64;

pub const ID_LEN: usize = 16;

/// 16-byte device identity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId(#[serde(with = "crate::hexser::array")] pub [u8; ID_LEN]);

impl DeviceId {
    /// Identity derived from a human label: the label's UTF-8 bytes, zero
    /// padded, when it fits in 16 bytes; otherwise hex is required.
    pub fn from_label(label: &str) -> Option<DeviceId> {
        if let Ok(id) = label.parse() {
            return Some(id);
        }
        let b = label.as_bytes();
        if b.is_empty() || b.len() > ID_LEN {
            return None;
        }
        let mut out = [0u8; ID_LEN];
        out[..b.len()].copy_from_slice(b);
        Some(DeviceId(out))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl FromStr for DeviceId {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; ID_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(DeviceId(out))
    }
}

impl fmt::Debug for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeviceId({})", self.to_hex())
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<DeviceId> for Field {
    fn from(id: DeviceId) -> Field {
        Field::Id(id.0)
    }
}

/// Correlates the envelopes of one handshake.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorrelationId(#[serde(with = "crate::hexser::array")] pub [u8; 16]);

impl fmt::Debug for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CorrelationId({})", hex::encode(self.0))
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_hex() {
        let a = DeviceId::from_label("pump-7").unwrap();
        assert_eq!(&a.0[..6], b"pump-7");
        let h = a.to_hex();
        assert_eq!(DeviceId::from_label(&h), Some(a));
        assert!(DeviceId::from_label("").is_none());
        assert!(DeviceId::from_label("this label is far too long").is_none());
    }
}
