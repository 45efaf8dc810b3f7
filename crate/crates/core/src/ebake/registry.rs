//! JSON persistence for the TA.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ta::{TaDeviceRecord, TrustedAuthority};
use super::{EbakeError, ProtocolConfig};
use crate::crypto::SymKey;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdtaGeneration {
    pub generation: u32,
    pub key: SymKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryFile {
    pub schema_version: u32,
    pub curve: String,
    pub kdta: Vec<KdtaGeneration>,
    pub devices: Vec<TaDeviceRecord>,
}

impl RegistryFile {
    pub fn from_ta(ta: &TrustedAuthority) -> RegistryFile {
        RegistryFile {
            schema_version: SCHEMA_VERSION,
            curve: crate::crypto::P256.name.to_owned(),
            kdta: ta
                .generations()
                .iter()
                .map(|(g, k)| KdtaGeneration {
                    generation: *g,
                    key: k.clone(),
                })
                .collect(),
            devices: ta.records().cloned().collect(),
        }
    }

    pub fn into_ta(self, config: ProtocolConfig) -> Result<TrustedAuthority, EbakeError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EbakeError::Registry(format!("unsupported schema version {}", self.schema_version)));
        }
        if crate::crypto::CurveParams::by_name(&self.curve).is_none() {
            return Err(EbakeError::Registry(format!("unsupported curve {}", self.curve)));
        }
        if self.kdta.is_empty() {
            return Err(EbakeError::Registry("no K_dta generation".into()));
        }
        let gens = self.kdta.into_iter().map(|g| (g.generation, g.key)).collect();
        Ok(TrustedAuthority::from_parts(config, gens, self.devices))
    }

    pub fn load(path: &Path) -> Result<RegistryFile, EbakeError> {
        let raw = fs::read(path).map_err(|e| EbakeError::Registry(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&raw).map_err(|e| EbakeError::Registry(format!("{}: {e}", path.display())))
    }

    /// Write to a sibling temp file, fsync, then rename over `path`.
    pub fn save(&self, path: &Path) -> Result<(), EbakeError> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| EbakeError::Registry(e.to_string()))?;
        write_atomic(path, &json).map_err(|e| EbakeError::Registry(format!("{}: {e}", path.display())))
    }
}

pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("registry");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
