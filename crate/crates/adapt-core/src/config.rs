//! Experiment configuration: one TOML file with sections for data, alignment,
//! augmentation, model, and training, plus defaults for every knob.
//!
//! Defaults are the full-scale training values (batch 1024, 1000 epochs,
//! model 6x128 on a (256, 32) representation). Desk-scale runs override them
//! in the config file or on the command line; the CLI echoes the fully
//! resolved config before running so every run is self-documenting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::AlignOptions;
use crate::augment::{Augmenter, NoiseConfig, SpanMaskConfig, TargetKind};
use crate::batch::SamplingMode;
use crate::data::NormalizationScope;
use crate::error::{Error, Result};
use crate::model::{Encoding, ModelConfig};
use crate::train::TrainMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Manifest path; relative paths resolve against the config file.
    pub manifest: Option<PathBuf>,
    pub normalization: NormalizationScope,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { manifest: None, normalization: NormalizationScope::PerSample }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub mask_ratio: f64,
    pub span_p: f64,
    pub l_max: usize,
    pub p_m: f64,
    pub p_r: f64,
    pub noise_mu: f64,
    pub noise_sigma: f64,
    pub noise_pretrain: bool,
    pub noise_finetune: bool,
    /// Whether reconstruction targets are the clean or the noised values.
    pub targets: TargetKind,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let mask = SpanMaskConfig::default();
        let noise = NoiseConfig::default();
        Self {
            mask_ratio: mask.mask_ratio,
            span_p: mask.p,
            l_max: mask.l_max,
            p_m: mask.p_m,
            p_r: mask.p_r,
            noise_mu: noise.mu,
            noise_sigma: noise.sigma,
            noise_pretrain: noise.enabled_pretrain,
            noise_finetune: noise.enabled_finetune,
            targets: TargetKind::Clean,
        }
    }
}

impl AugmentSection {
    pub fn span_config(&self) -> SpanMaskConfig {
        SpanMaskConfig {
            p: self.span_p,
            l_max: self.l_max,
            p_m: self.p_m,
            p_r: self.p_r,
            mask_ratio: self.mask_ratio,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            mu: self.noise_mu,
            sigma: self.noise_sigma,
            enabled_pretrain: self.noise_pretrain,
            enabled_finetune: self.noise_finetune,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub encoding: Encoding,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            ffn_dim: m.ffn_dim,
            encoding: m.encoding,
            dropout: m.dropout,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: TrainMode,
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub clip_max_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fine-tuning repetitions with consecutive seeds, reported mean +/- sd.
    pub seeds: usize,
    /// Normalize both reconstruction terms by the time-domain masked count.
    pub shared_n: bool,
    pub balance_datasets: bool,
    /// Worker threads for the batch-assembly prefetch pipeline; 0 disables
    /// prefetching.
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pretrain,
            base_lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 1000,
            warmup_epochs: 40,
            clip_max_norm: 1.0,
            batch_size: 1024,
            seed: 42,
            seeds: 1,
            shared_n: false,
            balance_datasets: false,
            threads: 0,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub align: AlignOptions,
    pub augment: AugmentSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        // Manifest paths are written relative to the config file.
        if let Some(manifest) = &config.data.manifest {
            if manifest.is_relative() {
                if let Some(dir) = path.parent() {
                    config.data.manifest = Some(dir.join(manifest));
                }
            }
        }
        Ok(config)
    }

    /// Apply the `ADAPT_SEED` environment variable, if set. Flag overrides
    /// applied later still win.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var("ADAPT_SEED") {
            let seed: u64 = value
                .parse()
                .map_err(|_| Error::validation(format!("ADAPT_SEED: bad value {value:?}")))?;
            self.train.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.align.validate()?;
        self.augment.span_config().validate()?;
        self.augment.noise_config().validate()?;
        let t = &self.train;
        if t.epochs == 0 {
            if t.warmup_epochs != 0 {
                return Err(Error::validation("train: warmup_epochs must be 0 when epochs is 0"));
            }
        } else if t.warmup_epochs >= t.epochs {
            return Err(Error::validation(format!(
                "train: warmup_epochs {} must be < epochs {}",
                t.warmup_epochs, t.epochs
            )));
        }
        if t.clip_max_norm <= 0.0 {
            return Err(Error::validation("train: clip_max_norm must be > 0"));
        }
        if t.batch_size == 0 {
            return Err(Error::validation("train: batch_size must be >= 1"));
        }
        if t.seeds == 0 {
            return Err(Error::validation("train: seeds must be >= 1"));
        }
        if !(t.base_lr >= 0.0) {
            return Err(Error::validation("train: base_lr must be >= 0"));
        }
        self.model_config(None)?.validate()
    }

    /// The model dimensions implied by this config. `c_in` and `seq_len`
    /// come from the alignment target shape.
    pub fn model_config(&self, n_classes: Option<usize>) -> Result<ModelConfig> {
        let config = ModelConfig {
            d_model: self.model.d_model,
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            ffn_dim: self.model.ffn_dim,
            c_in: self.align.c_out,
            seq_len: self.align.l_out,
            n_classes,
            encoding: self.model.encoding,
            dropout: self.model.dropout,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn augmenter(&self, mode: TrainMode) -> Augmenter {
        let noise = self.augment.noise_config();
        let noise_enabled = match mode {
            TrainMode::Pretrain => noise.enabled_pretrain,
            TrainMode::Finetune | TrainMode::FinetuneLc => noise.enabled_finetune,
        };
        Augmenter {
            noise,
            mask: self.augment.span_config(),
            noise_enabled,
            targets: self.augment.targets,
        }
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        if self.train.balance_datasets {
            SamplingMode::Balanced
        } else {
            SamplingMode::Proportional
        }
    }

    /// Fully resolved config as TOML, echoed by the CLI before each run.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
