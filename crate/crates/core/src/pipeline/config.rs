use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{BaseKind, TowerKind, SVD_CANDIDATES};
use crate::error::{Error, Result};
use crate::neural::TrainConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Substituted with the seed in external prediction paths.
pub const SEED_PLACEHOLDER: &str = "{seed}";
pub const DEFAULT_SEEDS: [u64; 3] = [0, 100, 200];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    External,
    Embedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub id: String,
    pub source: SourceKind,
    /// JSONL predictions (external families).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<String>,
    /// Model to take from the predictions file; defaults to its only model,
    /// or to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Embedding CSV (embedding families).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
    #[serde(default)]
    pub use_svd: bool,
    #[serde(default = "default_base")]
    pub base: BaseKind,
    #[serde(default = "default_candidates")]
    pub svd_candidates: Vec<usize>,
}

fn default_base() -> BaseKind {
    BaseKind::SoftmaxRegression
}

fn default_candidates() -> Vec<usize> {
    SVD_CANDIDATES.to_vec()
}

fn default_towers() -> Vec<TowerKind> {
    vec![TowerKind::A, TowerKind::B]
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_output() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

/// The JSON run configuration. Relative paths resolve against the directory
/// of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub train_labels: String,
    pub test_labels: String,
    pub families: Vec<FamilyConfig>,
    #[serde(default = "default_towers")]
    pub towers: Vec<TowerKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output")]
    pub output_dir: String,
    /// Parallel seed workers; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "yes")]
    pub include_baseline: bool,
    #[serde(default = "yes")]
    pub dump_predictions: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::from_json(&text, dir).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn predictions_path(&self, family: &FamilyConfig, seed: u64) -> Option<PathBuf> {
        family
            .predictions
            .as_ref()
            .map(|p| self.resolve(&p.replace(SEED_PLACEHOLDER, &seed.to_string())))
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// SHA-256 of the canonical JSON form. The base directory, `output_dir`
    /// and `jobs` are left out since they do not change any result.
    pub fn hash(&self) -> String {
        let canonical = PipelineConfig {
            output_dir: String::new(),
            jobs: 0,
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.families.is_empty() {
            return bad("at least one family is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return bad(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.towers.is_empty() || self.towers.iter().collect::<HashSet<_>>().len() != self.towers.len() {
            return bad(format!(
                "towers must be a non-empty list of distinct kinds, got {:?}",
                self.towers
            ));
        }
        if self.train.seed != 0 {
            return bad("train.seed is set per run from `seeds`; leave it out".into());
        }
        self.train.validate()?;

        let mut ids = HashSet::new();
        for fam in &self.families {
            if fam.id.is_empty() || !ids.insert(fam.id.as_str()) {
                return bad(format!("family id {:?} is empty or repeated", fam.id));
            }
            match fam.source {
                SourceKind::External => {
                    if fam.predictions.is_none() || fam.embeddings.is_some() || fam.use_svd {
                        return bad(format!(
                            "external family {} needs `predictions` and takes no `embeddings` or `use_svd`",
                            fam.id
                        ));
                    }
                    for &seed in &self.seeds {
                        self.require_file(&self.predictions_path(fam, seed).expect("checked above"))?;
                    }
                }
                SourceKind::Embedding => {
                    let Some(emb) = &fam.embeddings else {
                        return bad(format!("embedding family {} needs `embeddings`", fam.id));
                    };
                    if fam.predictions.is_some() || fam.model_id.is_some() {
                        return bad(format!(
                            "embedding family {} takes no `predictions` or `model_id`",
                            fam.id
                        ));
                    }
                    if fam.svd_candidates.is_empty() || fam.svd_candidates.contains(&0) {
                        return bad(format!("family {}: svd_candidates must be positive", fam.id));
                    }
                    self.require_file(&self.resolve(emb))?;
                }
            }
        }
        self.require_file(&self.resolve(&self.train_labels))?;
        self.require_file(&self.resolve(&self.test_labels))?;
        Ok(())
    }

    fn require_file(&self, path: &Path) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("file not found: {}", path.display())))
        }
    }
}
