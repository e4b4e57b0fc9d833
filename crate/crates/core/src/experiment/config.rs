use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::classifier::TrainConfig;
use crate::dataset_plan::{ClassVocabulary, OpennessMode, SoundscapeConfig};
use crate::synth_features::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassWeighting {
    Uniform,
    PowerLaw { exponent: f64 },
}

/// Soundscapes per pool. `tuning: None` uses 5% of the test pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub tuning: Option<usize>,
}

impl Default for PoolSizes {
    fn default() -> Self {
        Self {
            train: 1500,
            val: 300,
            test: 4000,
            tuning: None,
        }
    }
}

impl PoolSizes {
    pub fn tuning(&self) -> usize {
        self.tuning.unwrap_or_else(|| (self.test / 20).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    /// Two hidden layers of 64 units.
    Desk,
    /// Five hidden layers of 1024 units.
    Paper,
}

impl ModelPreset {
    pub fn hidden_layers(self) -> Vec<usize> {
        match self {
            ModelPreset::Desk => vec![64, 64],
            ModelPreset::Paper => vec![1024; 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_classes: usize,
    pub n_subsets: usize,
    pub openness: OpennessMode,
    pub class_weights: ClassWeighting,
    pub sizes: PoolSizes,
    pub soundscape: SoundscapeConfig,
    pub synth: SynthConfig,
    pub model_preset: ModelPreset,
    /// Overrides the preset when non-empty.
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub tuner_budget: usize,
    /// Variant `k` (1-based) uses seed `seed + k - 1`.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_classes: 89,
            n_subsets: 5,
            openness: OpennessMode::High,
            class_weights: ClassWeighting::Uniform,
            sizes: PoolSizes::default(),
            soundscape: SoundscapeConfig::default(),
            synth: SynthConfig::default(),
            model_preset: ModelPreset::Desk,
            hidden_layers: Vec::new(),
            train: TrainConfig {
                max_epochs: 60,
                ..TrainConfig::default()
            },
            tuner_budget: 100,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides; `key` is a dotted path and `value` is
    /// parsed as JSON, falling back to a plain string.
    pub fn with_overrides<'a>(
        self,
        overrides: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, ExperimentError> {
        let mut doc = serde_json::to_value(&self).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("override '{item}' is not key=value")))?;
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let (parent, last) = match key.rsplit_once('.') {
                Some((p, l)) => (format!("/{}", p.replace('.', "/")), l),
                None => (String::new(), key),
            };
            let obj = doc
                .pointer_mut(&parent)
                .and_then(serde_json::Value::as_object_mut)
                .filter(|o| o.contains_key(last))
                .ok_or_else(|| ExperimentError::Config(format!("unknown config key '{key}'")))?;
            obj.insert(last.to_string(), value);
        }
        serde_json::from_value(doc).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n_subsets < 3 || self.n_classes < self.n_subsets {
            return bad(format!(
                "need n_subsets >= 3 and n_classes >= n_subsets, got {} and {}",
                self.n_subsets, self.n_classes
            ));
        }
        let s = &self.sizes;
        if s.train == 0 || s.val == 0 || s.test == 0 || s.tuning() == 0 {
            return bad("every pool needs at least one soundscape".into());
        }
        if self.tuner_budget == 0 {
            return bad("tuner_budget must be at least 1".into());
        }
        if self.hidden().contains(&0) {
            return bad("hidden layers must have at least one unit".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        self.vocabulary()?;
        Ok(())
    }

    pub fn hidden(&self) -> Vec<usize> {
        if self.hidden_layers.is_empty() {
            self.model_preset.hidden_layers()
        } else {
            self.hidden_layers.clone()
        }
    }

    pub fn vocabulary(&self) -> Result<ClassVocabulary, ExperimentError> {
        let v = match &self.class_weights {
            ClassWeighting::Uniform => ClassVocabulary::uniform(self.n_classes),
            ClassWeighting::PowerLaw { exponent } => {
                ClassVocabulary::power_law(self.n_classes, *exponent)
            }
        };
        v.map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn variant_seed(&self, variant: usize) -> u64 {
        self.seed + variant as u64 - 1
    }

    /// Canonical serialized form; this exact text is stored and hashed.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn hash(&self) -> String {
        hash_bytes(self.canonical_json().as_bytes())
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
