//! Run configuration: one TOML file with a section per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use okra_core::kg::InferenceRule;
use okra_core::model::ModelConfig;
use okra_core::sampler::{LabelScheme, WalkConfig};
use okra_core::synth::SynthConfig;
use okra_core::train::TrainConfig;

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Directory of input tables; the `generate` output when unset.
    pub data_dir: Option<PathBuf>,
    pub rules: Vec<InferenceRule>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            rules: vec![InferenceRule::SubclassPropagate {
                hierarchy: "in_region".to_string(),
                target: "located_in".to_string(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub max_length: usize,
    pub walks_per_anchor: usize,
    pub uniform_length: bool,
    /// Uniform negatives added per candidate on top of the label file.
    pub negative_per_candidate: usize,
    pub label_scheme: LabelScheme,
    /// Train, validation and test shares of the candidates.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let walk = WalkConfig::default();
        Self {
            max_length: walk.max_length,
            walks_per_anchor: walk.walks_per_anchor,
            uniform_length: walk.uniform_length,
            negative_per_candidate: 0,
            label_scheme: LabelScheme::Proprietary,
            split: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn walk(&self) -> WalkConfig {
        WalkConfig {
            max_length: self.max_length,
            walks_per_anchor: self.walks_per_anchor,
            uniform_length: self.uniform_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    /// Entity attribute that assigns candidates and vacancies to groups.
    pub group_attribute: String,
    pub protected: String,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cutoffs: vec![3, 5, 10],
            group_attribute: "region".to_string(),
            protected: "rural".to_string(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Replaces every section seed when set.
    pub seed: Option<u64>,
    /// Output directory; relative paths resolve against the config file.
    pub out: PathBuf,
    pub data: SynthConfig,
    pub graph: GraphConfig,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("run"),
            data: SynthConfig::default(),
            graph: GraphConfig::default(),
            sampler: SamplerConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse TOML text; `base` anchors relative paths.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, Error> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if self.out.is_relative() {
            self.out = base.join(&self.out);
        }
        if let Some(dir) = &mut self.graph.data_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
    }

    /// Propagate the global seed into every section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.data.seed = seed;
        self.sampler.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Result<(), Error> {
        let config = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        self.data.validate().map_err(|e| config(&e))?;
        self.train.validate().map_err(|e| config(&e))?;
        let mut model = self.model.clone();
        model.relation_count = model.relation_count.max(1);
        model.validate().map_err(|e| config(&e))?;
        if self.sampler.max_length == 0 || self.sampler.walks_per_anchor == 0 {
            return Err(Error::Config("sampler.max_length and sampler.walks_per_anchor must be at least 1".into()));
        }
        let sum: f64 = self.sampler.split.iter().sum();
        if self.sampler.split.iter().any(|&r| r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config("sampler.split must be nonnegative and sum to 1".into()));
        }
        if self.eval.cutoffs.is_empty() || self.eval.cutoffs.contains(&0) {
            return Err(Error::Config("eval.cutoffs must be nonempty and positive".into()));
        }
        if !self.eval.cutoffs.contains(&10) {
            return Err(Error::Config("eval.cutoffs must include 10".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory does
    /// not take part, so a relocated run keeps its digest.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
