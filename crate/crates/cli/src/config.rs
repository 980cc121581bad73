use std::path::{Path, PathBuf};

use comom::backends::{ConnectOptions, FeatureConfig, TrainConfig};
use comom::eval::Averaging;
use comom::ingest::{Format, LintConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Defaults read from the global config file. Command-line flags win over
/// every value here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub lint: LintConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub averaging: Averaging,
    pub workers: Option<usize>,
    pub connect: ConnectOptions,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(CliConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::from(comom::Error::Io(e)).context(path))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage("InvalidConfig", format!("{}: {e}", path.display())))
    }
}

/// What produced an artifact: tool version, seed, and a digest of the
/// effective configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Provenance {
            tool: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(&config),
            config,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }

    /// Writes `<artifact>.provenance.json`.
    pub fn write_sidecar(&self, artifact: &Path) -> Result<PathBuf, Failure> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".provenance.json");
        let path = PathBuf::from(name);
        write_json(&path, &self.to_value())?;
        Ok(path)
    }

    /// Adds a `provenance` key to a JSON object.
    pub fn attach(&self, mut report: Value) -> Value {
        if let Value::Object(map) = &mut report {
            map.insert("provenance".into(), self.to_value());
        }
        report
    }
}

/// Hex SHA-256 of the compact JSON encoding; object keys are sorted.
pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(serde_json::to_vec(config).expect("value serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(comom::Error::Json)? + "\n";
    std::fs::write(path, text).map_err(|e| Failure::from(comom::Error::Io(e)).context(path))
}

pub fn path_value(path: &Path) -> Value {
    json!(path.display().to_string())
}
