//! Run manifests: enough to repeat a command bit for bit in sequential mode.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lama_core::config::{RunConfig, WeightSource};
use lama_core::regularizer::sidecar_path;
use lama_core::tomo::ExecMode;
use lama_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Versions {
    pub lama_core: &'static str,
    pub lama_cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub noise: u64,
    pub image_weights: Option<u64>,
    pub sinogram_weights: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub versions: Versions,
    pub config_path: PathBuf,
    pub overrides: Vec<(String, String)>,
    /// SHA-256 of `config`, the fully resolved configuration.
    pub config_sha256: String,
    pub config: String,
    pub seeds: Seeds,
    pub exec: ExecMode,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn weight_seed(src: &WeightSource) -> Option<u64> {
    match src {
        WeightSource::Random { seed, .. } => Some(*seed),
        _ => None,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes a data file and, when present, its sidecar.
fn hash_files(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths {
        for f in [p.clone(), sidecar_path(p)] {
            if f.is_file() {
                out.insert(f.display().to_string(), sha256_hex(&std::fs::read(&f)?));
            }
        }
    }
    Ok(out)
}

impl Manifest {
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        config_path: &Path,
        overrides: &[(String, String)],
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<Self> {
        let config = cfg.to_toml()?;
        Ok(Manifest {
            command: command.to_string(),
            versions: Versions {
                lama_core: lama_core::VERSION,
                lama_cli: env!("CARGO_PKG_VERSION"),
            },
            config_path: config_path.to_path_buf(),
            overrides: overrides.to_vec(),
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            seeds: Seeds {
                noise: cfg.noise.seed,
                image_weights: weight_seed(&cfg.regularizer.image),
                sinogram_weights: weight_seed(&cfg.regularizer.sinogram),
            },
            exec: cfg.exec,
            inputs: hash_files(inputs)?,
            outputs: hash_files(outputs)?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("manifest_{}.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
