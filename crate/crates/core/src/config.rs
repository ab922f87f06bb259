//! Declarative pipeline configuration read from TOML.
//!
//! Manifest, triplet, parameter and descriptor paths are relative to the
//! output directory; a network spec file is relative to the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::SelectionAxis;
use crate::loss::TripletCostConfig;
use crate::mining::{MiningRule, RuleKind, SynthConfig};
use crate::network::NetworkSpec;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Built-in spec name (`tiny` or `paper`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// TOML spec file; takes precedence over `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            preset: Some("tiny".into()),
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_triplets")]
    pub triplets: PathBuf,
    #[serde(default = "default_params")]
    pub params: PathBuf,
    #[serde(default = "default_train_log")]
    pub train_log: PathBuf,
    #[serde(default = "default_descriptors")]
    pub descriptors: PathBuf,
    #[serde(default = "default_eval_dir")]
    pub eval: PathBuf,
    /// Optional weight dump imported before training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import_weights: Option<PathBuf>,
}

fn default_out_dir() -> PathBuf {
    "out".into()
}
fn default_triplets() -> PathBuf {
    "triplets.csv".into()
}
fn default_params() -> PathBuf {
    "params.bin".into()
}
fn default_train_log() -> PathBuf {
    "train_log.csv".into()
}
fn default_descriptors() -> PathBuf {
    "descriptors".into()
}
fn default_eval_dir() -> PathBuf {
    "eval".into()
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            out_dir: default_out_dir(),
            triplets: default_triplets(),
            params: default_params(),
            train_log: default_train_log(),
            descriptors: default_descriptors(),
            eval: default_eval_dir(),
            import_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: RuleKind,
    /// One manifest for viewpoint mining, two for cross-condition mining.
    pub manifests: Vec<PathBuf>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Two-column `a_frame,b_frame` file; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<PathBuf>,
    /// The rule seed is replaced by one derived from the pipeline seed.
    #[serde(default)]
    pub rule: MiningRule,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningSection {
    /// Triplets written by `mine`; defaults to iterations x batch size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub database: PathBuf,
    pub queries: Vec<PathBuf>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    /// Largest diagonal tolerance; defaults to the full matrix extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    #[serde(default)]
    pub axis: SelectionAxis,
    #[serde(default = "default_embed_batch")]
    pub embed_batch: usize,
}

fn default_k() -> Vec<usize> {
    vec![5, 10]
}

fn default_embed_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub mining: MiningSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub cost: TripletCostConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalSection>,
    /// Directory of the config file; not part of the serialised form.
    #[serde(skip)]
    pub config_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid pipeline config: {e}")))?;
        cfg.apply_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.config_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serialises")
    }

    /// Propagates `seed` to every seeded subsystem.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
        self.training.seed = seed;
        for (i, src) in self.mining.sources.iter_mut().enumerate() {
            src.rule.seed = seed.wrapping_add(1 + i as u64);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.network.preset.is_none() && self.network.file.is_none() {
            return Err(Error::config("network needs a preset or a file"));
        }
        if let Some(p) = &self.network.preset {
            if self.network.file.is_none() && NetworkSpec::preset(p).is_none() {
                return Err(Error::config(format!("unknown network preset `{p}`")));
            }
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        for (i, src) in self.mining.sources.iter().enumerate() {
            src.rule.validate()?;
            let want = match src.kind {
                RuleKind::Viewpoint => 1,
                RuleKind::CrossCondition => 2,
            };
            if src.manifests.len() != want {
                return Err(Error::config(format!(
                    "mining source {} ({}) needs {want} manifest(s), has {}",
                    i + 1,
                    src.kind,
                    src.manifests.len()
                )));
            }
            if !(src.weight >= 0.0 && src.weight.is_finite()) {
                return Err(Error::config(format!("mining source {} has invalid weight", i + 1)));
            }
        }
        if !self.mining.sources.is_empty() && self.mining.sources.iter().all(|s| s.weight == 0.0) {
            return Err(Error::config("mining source weights are all zero"));
        }
        if self.mining.count == Some(0) {
            return Err(Error::config("mining count must be at least 1"));
        }
        self.training.validate()?;
        self.cost.validate()?;
        if let Some(e) = &self.evaluation {
            if e.k.is_empty() || e.k.contains(&0) {
                return Err(Error::config("evaluation k values must be at least 1"));
            }
            if e.queries.is_empty() {
                return Err(Error::config("evaluation needs at least one query manifest"));
            }
            if e.embed_batch == 0 {
                return Err(Error::config("embed_batch must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        match (&self.network.file, &self.network.preset) {
            (Some(file), _) => {
                let path = self.config_dir.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                NetworkSpec::from_toml(&text)
            }
            (None, Some(name)) => NetworkSpec::preset(name)
                .ok_or_else(|| Error::config(format!("unknown network preset `{name}`"))),
            (None, None) => Err(Error::config("network needs a preset or a file")),
        }
    }

    /// Resolves a path against the output directory.
    pub fn out_path(&self, p: &Path) -> PathBuf {
        self.paths.out_dir.join(p)
    }

    pub fn triplet_count(&self) -> usize {
        self.mining
            .count
            .unwrap_or(self.training.iterations * self.training.batch_size)
    }

    /// Short SHA-256 of the canonical config with the output directory blanked,
    /// so relocating outputs does not change it.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
