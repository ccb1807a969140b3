//! Run configuration read from TOML, with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::DEFAULT_LAMBDA;
use crate::regularizer::{load_weights, make_random_weights, make_tv_weights, ArchSpec, ConvStack, Domain};
use crate::simdata::{NoiseSpec, PhantomSpec};
use crate::solver::SolverParams;
use crate::tomo::{ExecMode, ScanGeometry, ViewMask};

/// Where a regularizer's weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSource {
    None,
    Tv {
        strength: f64,
    },
    Random {
        seed: u64,
        #[serde(default)]
        arch: Option<ArchSpec>,
    },
    File {
        path: PathBuf,
    },
}

impl WeightSource {
    /// Builds the stack; `None` for an absent regularizer.
    pub fn build(&self, domain: Domain) -> Result<Option<ConvStack>> {
        match self {
            WeightSource::None => Ok(None),
            WeightSource::Tv { strength } => {
                if !strength.is_finite() {
                    return Err(Error::config("tv strength must be finite"));
                }
                Ok(Some(make_tv_weights(domain, *strength)))
            }
            WeightSource::Random { seed, arch } => {
                let arch = arch.unwrap_or_else(|| ArchSpec::default_for(domain));
                Ok(Some(make_random_weights(*seed, &arch)?))
            }
            WeightSource::File { path } => Ok(Some(load_weights(path)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub image: WeightSource,
    pub sinogram: WeightSource,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            image: WeightSource::Tv { strength: 0.02 },
            sinogram: WeightSource::Tv { strength: 0.002 },
        }
    }
}

/// Retained views: either a count spread uniformly over the full set or explicit indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub views: Option<usize>,
    pub indices: Option<Vec<usize>>,
}

impl MaskConfig {
    pub fn build(&self, n_views_full: usize) -> Result<ViewMask> {
        match (&self.views, &self.indices) {
            (Some(_), Some(_)) => Err(Error::config("mask takes either `views` or `indices`, not both")),
            (Some(n), None) => ViewMask::uniform(n_views_full, *n),
            (None, Some(ix)) => ViewMask::new(n_views_full, ix.clone()),
            (None, None) => Ok(ViewMask::identity(n_views_full)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: ScanGeometry,
    #[serde(default)]
    pub phantom: Option<PhantomSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub exec: ExecMode,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Parses a command-line value as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` inside a table, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("malformed key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::config(format!("`{p}` in `{key}` is not a table"))),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    pub fn with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::with_overrides(&text, overrides)?;
        // weight paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for src in [&mut cfg.regularizer.image, &mut cfg.regularizer.sinogram] {
            if let WeightSource::File { path } = src {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if let Some(p) = &self.phantom {
            p.validate()?;
            if p.grid != self.geometry.grid {
                return Err(Error::config("phantom grid differs from the geometry grid"));
            }
        }
        self.noise.validate().map_err(|e| Error::config(e.to_string()))?;
        self.mask.build(self.geometry.n_views_full)?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.solver.validate()
    }

    /// Fails if a referenced weight file is missing.
    pub fn check_files(&self) -> Result<()> {
        for src in [&self.regularizer.image, &self.regularizer.sinogram] {
            if let WeightSource::File { path } = src {
                if !path.is_file() {
                    return Err(Error::config(format!("weight file {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn view_mask(&self) -> Result<ViewMask> {
        self.mask.build(self.geometry.n_views_full)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}
