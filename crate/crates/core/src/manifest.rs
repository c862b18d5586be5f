//! Run configuration and the append-only run manifest.
//!
//! A run is one command applied to one [`RunConfig`]. The config is a single
//! JSON document; every key can also be given as a dash-case flag, and flags
//! win. Each run appends one [`RunManifest`] line to `manifest.jsonl` in its
//! output directory, recording the config it ran with and sha256 digests of
//! what it read and wrote.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusSetting, Split};
use crate::fixture::FixtureConfig;
use crate::rerank::JudgeConfig;
use crate::retrieval::DistanceMetric;
use crate::train::TrainConfig;
use crate::triplet::SynthConfig;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// File names inside a data directory.
pub const PROPOSALS_FILE: &str = "proposals.jsonl";
pub const PAPERS_FILE: &str = "papers.jsonl";
pub const CITATIONS_FILE: &str = "citations.jsonl";
pub const ENTITIES_FILE: &str = "entities.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding proposals/papers/citations JSONL and optional entities.
    pub data_dir: Option<PathBuf>,
    /// Encoder checkpoint to embed with, or to start training from.
    pub checkpoint: Option<PathBuf>,
    /// Directory holding `papers.emb` and `proposals.emb`.
    pub embeddings_dir: Option<PathBuf>,
    pub rankings: Option<PathBuf>,
    /// Replacement prompt templates, matched by file name.
    pub prompts_dir: Option<PathBuf>,
    /// Judge response cache; also settable through the environment.
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub setting: CorpusSetting,
    pub split: Split,
    pub metric: DistanceMetric,
    pub k: Vec<usize>,
    /// Largest k on the elbow coverage curve.
    pub k_max: usize,
    /// Overrides every component seed when set.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub judge: JudgeConfig,
    pub fixture: FixtureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            checkpoint: None,
            embeddings_dir: None,
            rankings: None,
            prompts_dir: None,
            cache_dir: None,
            out_dir: None,
            setting: CorpusSetting::Restricted,
            split: Split::Test,
            metric: DistanceMetric::Euclidean,
            k: vec![3, 5, 10, 20],
            k_max: 50,
            seed: None,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            judge: JudgeConfig::default(),
            fixture: FixtureConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("config `{}`: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pushes the top-level seed, if any, into every component.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.train.seed = seed;
            self.judge.seed = seed;
            self.fixture.seed = seed;
        }
    }

    /// The seed recorded for the run.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.synth.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::InvalidConfig("k values must be at least 1".into()));
        }
        if self.k_max < 3 {
            return Err(Error::InvalidConfig("k_max must be at least 3".into()));
        }
        self.synth.validate()?;
        self.train.validate()?;
        self.judge.validate()?;
        self.fixture.validate()
    }

    /// Fails unless `path` is set and exists.
    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("`{key}` is required")))?;
        if !p.exists() {
            return Err(Error::InvalidConfig(format!("{key} `{}` does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("`out_dir` is required".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

pub fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// `ok`, or the error that ended the run.
    pub status: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

impl RunManifest {
    pub fn begin(command: &str, config: &RunConfig) -> Self {
        let now = unix_millis();
        Self {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.effective_seed(),
            started_unix_ms: now,
            finished_unix_ms: now,
            status: "ok".into(),
            config: config.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn add_artifact(&mut self, path: &Path) -> Result<()> {
        self.artifacts.push(digest_file(path)?);
        Ok(())
    }

    /// Appends this manifest as one line of `dir/manifest.jsonl`.
    pub fn append_to(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix_ms = unix_millis();
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let mut line = serde_json::to_vec(self)?;
        line.push(b'\n');
        OpenOptions::new().create(true).append(true).open(&path)?.write_all(&line)?;
        Ok(path)
    }
}

pub fn read_manifests(text: &str) -> Result<Vec<RunManifest>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
