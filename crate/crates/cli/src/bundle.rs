//! Output bundle: `config.json`, `manifest.json` and per-stage artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ment_core::export::sha256_hex;

use crate::config::PipelineConfig;
use crate::{CliError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STAGES: [&str; 7] = [
    "synth",
    "embed",
    "distances",
    "trajectories",
    "attribute",
    "cpd",
    "study",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
    /// Hash of `config.json` when the artifact was written.
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub cli_version: String,
    pub core_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Keyed by path relative to the bundle root.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            tool: "ment".into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            core_version: ment_core::VERSION.into(),
            config_hash: String::new(),
            seeds: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }
}

pub struct Bundle {
    root: PathBuf,
}

/// Artifacts of one stage run, committed to the manifest together.
pub struct StageWriter<'a> {
    bundle: &'a Bundle,
    stage: &'static str,
    config_hash: String,
    written: Vec<(String, ArtifactEntry)>,
}

impl Bundle {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    /// Removes the config, the manifest and every stage directory.
    pub fn reset(&self) -> Result<()> {
        for name in [CONFIG_FILE, MANIFEST_FILE] {
            let path = self.path(name);
            if path.exists() {
                fs::remove_file(&path).map_err(CliError::io(&path))?;
            }
        }
        for stage in STAGES {
            let dir = self.path(stage);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(CliError::io(&dir))?;
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of an upstream artifact, or an error naming the stage that makes it.
    pub fn require(&self, rel: &str, what: &str, stage: &'static str) -> Result<PathBuf> {
        let path = self.path(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::Missing {
                what: what.into(),
                path,
                stage,
            })
        }
    }

    pub fn read_text(&self, rel: &str, what: &str, stage: &'static str) -> Result<String> {
        let path = self.require(rel, what, stage)?;
        fs::read_to_string(&path).map_err(CliError::io(path))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(
        &self,
        rel: &str,
        what: &str,
        stage: &'static str,
    ) -> Result<T> {
        let text = self.read_text(rel, what, stage)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", self.path(rel).display())))
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        let path = self.path(CONFIG_FILE);
        if !path.exists() {
            return Ok(PipelineConfig::default());
        }
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(ment_core::Error::from)?;
        bytes.push(b'\n');
        let path = self.path(rel);
        fs::write(&path, &bytes).map_err(CliError::io(path))?;
        Ok(bytes)
    }

    /// Writes the updated config and starts a stage: clears the stage's
    /// directory and its manifest entries, and records its seed if any.
    pub fn begin_stage(
        &self,
        stage: &'static str,
        config: &PipelineConfig,
        seed: Option<u64>,
    ) -> Result<StageWriter<'_>> {
        let config_hash = sha256_hex(&self.write_json(CONFIG_FILE, config)?);
        let dir = self.path(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(CliError::io(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        let mut manifest = self.manifest()?;
        manifest.config_hash = config_hash.clone();
        manifest.artifacts.retain(|_, e| e.stage != stage);
        match seed {
            Some(s) => manifest.seeds.insert(stage.to_string(), s),
            None => manifest.seeds.remove(stage),
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(StageWriter {
            bundle: self,
            stage,
            config_hash,
            written: Vec::new(),
        })
    }
}

impl StageWriter<'_> {
    /// Writes `<stage>/<name>`.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let rel = format!("{}/{name}", self.stage);
        let path = self.bundle.path(&rel);
        fs::write(&path, bytes).map_err(CliError::io(path))?;
        self.written.push((
            rel,
            ArtifactEntry {
                stage: self.stage.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                config_hash: self.config_hash.clone(),
            },
        ));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(ment_core::Error::from)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn commit(self) -> Result<()> {
        let mut manifest = self.bundle.manifest()?;
        let count = self.written.len();
        manifest.artifacts.extend(self.written);
        self.bundle.write_json(MANIFEST_FILE, &manifest)?;
        log::info!("{}: wrote {count} artifact(s)", self.stage);
        Ok(())
    }
}
