use std::path::{Path, PathBuf};

use serde::Deserialize;

use ebake_core::crypto::CurveParams;
use ebake_core::ebake::{ProtocolConfig, DEFAULT_BLOCK_MS, DEFAULT_FRESHNESS_MS};
use ebake_core::transport::DeliveryMode;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    InProcess,
    LiveMqtt,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub mode: TransportMode,
    /// Per-message loss probability for the in-process broker.
    pub loss: f64,
    pub host: String,
    pub port: u16,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: TransportMode::InProcess,
            loss: 0.0,
            host: "localhost".into(),
            port: 1883,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub curve: String,
    pub delta_ms: u64,
    pub block_ms: u64,
    pub handshake_timeout_ms: u64,
    pub seed: Option<u64>,
    pub registry: PathBuf,
    pub credentials_dir: PathBuf,
    pub transport: TransportConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            curve: "P-256".into(),
            delta_ms: DEFAULT_FRESHNESS_MS,
            block_ms: DEFAULT_BLOCK_MS,
            handshake_timeout_ms: 4 * DEFAULT_FRESHNESS_MS,
            seed: None,
            registry: "ebake-registry.json".into(),
            credentials_dir: "credentials".into(),
            transport: TransportConfig::default(),
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (TOML)
    #[arg(long, env = "EBAKE_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Freshness window Δ in ms
    #[arg(long, global = true)]
    pub delta_ms: Option<u64>,
    #[arg(long, global = true)]
    pub block_ms: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[arg(long, global = true)]
    pub creds_dir: Option<PathBuf>,
    /// In-process message loss probability
    #[arg(long, global = true)]
    pub loss: Option<f64>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn resolve(o: &Overrides) -> Result<Config, CliError> {
        let mut c = match &o.config {
            Some(p) => Config::from_file(p)?,
            None => Config::default(),
        };
        if let Some(v) = o.delta_ms {
            c.delta_ms = v;
            c.handshake_timeout_ms = c.handshake_timeout_ms.max(4 * v);
        }
        if let Some(v) = o.block_ms {
            c.block_ms = v;
        }
        if o.seed.is_some() {
            c.seed = o.seed;
        }
        if let Some(v) = &o.registry {
            c.registry = v.clone();
        }
        if let Some(v) = &o.creds_dir {
            c.credentials_dir = v.clone();
        }
        if let Some(v) = o.loss {
            c.transport.loss = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if CurveParams::by_name(&self.curve).is_none() {
            return Err(CliError::Usage(format!("unsupported curve {:?}", self.curve)));
        }
        // Δ = 0 is accepted; it makes every handshake fail its first freshness check.
        if self.block_ms < self.delta_ms {
            return Err(CliError::Usage("block_ms must be at least delta_ms".into()));
        }
        if !(0.0..1.0).contains(&self.transport.loss) {
            return Err(CliError::Usage("transport.loss must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            freshness_ms: self.delta_ms,
            block_ms: self.block_ms,
            ..ProtocolConfig::default()
        }
    }

    pub fn delivery(&self) -> Result<DeliveryMode, CliError> {
        match self.transport.mode {
            TransportMode::LiveMqtt => Err(CliError::Transport(format!(
                "live MQTT transport ({}:{}) is not available in this build; use mode = \"in-process\"",
                self.transport.host, self.transport.port
            ))),
            TransportMode::InProcess if self.transport.loss > 0.0 => Ok(DeliveryMode::lossy(self.transport.loss)),
            TransportMode::InProcess => Ok(DeliveryMode::default()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(rand::random)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let c: Config = toml::from_str(
            r#"
            delta_ms = 2000
            block_ms = 60000
            seed = 9
            [transport]
            mode = "in-process"
            loss = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(c.delta_ms, 2000);
        assert_eq!(c.transport.loss, 0.01);
        assert_eq!(c.registry, PathBuf::from("ebake-registry.json"));
    }

    #[test]
    fn rejects_bad_values() {
        let c = Config {
            block_ms: 10,
            delta_ms: 20,
            ..Config::default()
        };
        assert!(c.validate().is_err());
        let c = Config {
            curve: "P-192".into(),
            ..Config::default()
        };
        assert!(c.validate().is_err());
        assert!(toml::from_str::<Config>("colour = 1").is_err());
    }

    #[test]
    fn live_mqtt_is_a_transport_error() {
        let mut c = Config::default();
        c.transport.mode = TransportMode::LiveMqtt;
        assert!(matches!(c.delivery(), Err(CliError::Transport(_))));
    }
}
