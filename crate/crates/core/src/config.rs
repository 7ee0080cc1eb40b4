//! Pipeline configuration file (TOML) with one section per component, and
//! the dataset manifest that ties outputs to the data they came from.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::GateParams;
use crate::metrics::EvalParams;
use crate::scorer::NetConfig;
use crate::simulator::SimConfig;
use crate::spatial::SpatialParams;
use crate::temporal::TemporalParams;
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub simulator: SimConfig,
    pub spatial: SpatialParams,
    pub temporal: TemporalParams,
    pub gate: GateParams,
    pub net: NetConfig,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.spatial.validate()?;
        self.temporal.validate()?;
        self.gate.validate()?;
        self.net.validate()?;
        self.eval.validate()?;
        if self.temporal.tau_temporal != self.gate.tau_temporal {
            return Err(Error::InvalidConfig(format!(
                "temporal.tau_temporal ({}) and gate.tau_temporal ({}) must agree",
                self.temporal.tau_temporal, self.gate.tau_temporal
            )));
        }
        Ok(())
    }

    pub fn tracker(&self) -> TrackerParams {
        TrackerParams {
            spatial: self.spatial,
            temporal: self.temporal,
            gate: self.gate,
        }
    }

    /// Digest of the canonical JSON form; independent of TOML formatting.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("configuration serializes")
                .as_bytes(),
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Path relative to the dataset directory.
    pub path: String,
    pub sha256: String,
}

/// Written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
    /// Digest over the file list; outputs derived from the dataset carry it.
    pub dataset_hash: String,
}

impl Manifest {
    pub fn new(seed: u64, config_hash: String, files: Vec<ManifestEntry>) -> Self {
        let dataset_hash = Self::digest(&files);
        Manifest {
            seed,
            config_hash,
            files,
            dataset_hash,
        }
    }

    fn digest(files: &[ManifestEntry]) -> String {
        let mut h = Sha256::new();
        for f in files {
            h.update(f.path.as_bytes());
            h.update(b"\0");
            h.update(f.sha256.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if Self::digest(&m.files) != m.dataset_hash {
            return Err(Error::Manifest(format!(
                "{} has an inconsistent dataset_hash",
                path.display()
            )));
        }
        Ok(m)
    }

    /// Re-hashes every listed file under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let p = dir.join(&f.path);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let got = sha256_hex(&bytes);
            if got != f.sha256 {
                return Err(Error::Manifest(format!(
                    "{} hashes to {got}, manifest says {}",
                    f.path, f.sha256
                )));
            }
        }
        Ok(())
    }

    pub fn require(&self, dataset_hash: &str) -> Result<()> {
        if dataset_hash != self.dataset_hash {
            return Err(Error::Manifest(format!(
                "outputs were produced from dataset {dataset_hash}, but this dataset is {}",
                self.dataset_hash
            )));
        }
        Ok(())
    }
}
