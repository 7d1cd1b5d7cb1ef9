//! `orthoplan.toml`: every tunable in one file. Missing sections and keys
//! take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::orchestrator::FusionConfig;
use crate::scoring::ScoringConfig;
use crate::staging::StagingConfig;

/// Placeholder pre-approval items shown by the review UI. Clinics are
/// expected to replace them in the config file.
pub const DEFAULT_CHECKLIST: [&str; 10] = [
    "Medical and dental history reviewed",
    "Radiographs reviewed for root and bone limits",
    "Periodontal status adequate for planned movement",
    "Missing and restored teeth confirmed",
    "Extrusions reviewed against attachment plan",
    "Interproximal reduction amounts confirmed",
    "Attachment placement reviewed",
    "Molar distalisation sequence reviewed",
    "Final occlusion and midline reviewed",
    "Patient informed of expected aligner count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Allowed browser origins; empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub checklist: Vec<String>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            cors_origins: vec!["http://localhost:5173".into()],
            checklist: DEFAULT_CHECKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub orchestrator: FusionConfig,
    pub staging: StagingConfig,
    pub scoring: ScoringConfig,
    pub benchmark: BenchmarkConfig,
    pub service: ServiceSettings,
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Reads `path` if given, else the file named by `ORTHOPLAN_CONFIG`,
    /// else defaults. `ORTHOPLAN_DATA_DIR` overrides the data directory.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os("ORTHOPLAN_CONFIG").map(PathBuf::from);
        let mut cfg = match path.map(Path::to_path_buf).or(env_path) {
            Some(p) => Self::load(&p)?,
            None => Self::default(),
        };
        if let Some(dir) = std::env::var_os("ORTHOPLAN_DATA_DIR") {
            cfg.service.data_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.orchestrator.validate()?;
        self.staging.validate()?;
        self.scoring.validate()?;
        if self.service.checklist.is_empty() {
            return Err(Error::Config("service.checklist must not be empty".into()));
        }
        Ok(())
    }
}
