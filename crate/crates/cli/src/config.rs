//! Flat run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use diffexr::corpus::Ranking;
use diffexr::diffusion::ScheduleKind;
use diffexr::model::{KeywordMode, ModelConfig};
use diffexr::pipeline::ProfilePool;
use diffexr::training::{DecayRule, LossWeights, LrScheduleConfig, TrainConfig};

/// Every tunable of a run. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,

    // Corpus and profiles.
    pub min_count: usize,
    pub profile_k: usize,
    pub profile_pool: ProfilePool,
    /// `similarity` ranks by the target review; `recency` needs no target.
    pub held_out_ranking: Ranking,
    pub embed_dim: usize,

    // Model.
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_dim: usize,
    pub max_encoder_len: usize,
    pub max_review_len: usize,
    pub dropout: f64,
    pub id_init_std: f64,

    // Diffusion.
    pub horizon: usize,
    pub schedule: ScheduleKind,

    // Training.
    pub lambda_ctx: f64,
    pub lambda_r: f64,
    pub lambda_w: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub stop_after: usize,
    pub decay_rule: DecayRule,
    pub clip_max_norm: f64,
    pub max_epochs: usize,
    pub restore_best: bool,
    pub checkpoint_every: usize,
    pub mode: KeywordMode,
    pub ablate_diffusion: bool,

    // Generation.
    pub stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lr = LrScheduleConfig::default();
        let w = LossWeights::default();
        Self {
            seed: 0,
            data_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("run/default"),
            min_count: 1,
            profile_k: 5,
            profile_pool: ProfilePool::History,
            held_out_ranking: Ranking::Similarity,
            embed_dim: 16,
            d_model: 32,
            num_heads: 2,
            num_layers: 2,
            ffn_dim: 64,
            max_encoder_len: 64,
            max_review_len: 15,
            dropout: 0.2,
            id_init_std: 0.1,
            horizon: 200,
            schedule: ScheduleKind::Cosine,
            lambda_ctx: w.context,
            lambda_r: w.rating,
            lambda_w: w.generation,
            batch_size: 32,
            lr: lr.initial_lr,
            lr_decay: lr.decay,
            stop_after: lr.stop_after,
            decay_rule: lr.rule,
            clip_max_norm: 1.0,
            max_epochs: 500,
            restore_best: true,
            checkpoint_every: 1,
            mode: KeywordMode::None,
            ablate_diffusion: false,
            stride: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.profile_k == 0 {
            bail!("profile_k must be >= 1");
        }
        if self.embed_dim == 0 {
            bail!("embed_dim must be >= 1");
        }
        if self.stride == 0 {
            bail!("stride must be >= 1");
        }
        if self.stride > self.horizon {
            bail!("stride {} exceeds horizon {}", self.stride, self.horizon);
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint_every must be >= 1");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize, num_users: usize, num_items: usize) -> anyhow::Result<ModelConfig> {
        let c = ModelConfig {
            d_model: self.d_model,
            num_heads: self.num_heads,
            num_layers: self.num_layers,
            ffn_dim: self.ffn_dim,
            max_encoder_len: self.max_encoder_len,
            max_review_len: self.max_review_len,
            vocab_size,
            num_users,
            num_items,
            horizon: self.horizon,
            dropout: self.dropout,
            id_init_std: self.id_init_std,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            weights: LossWeights {
                context: self.lambda_ctx,
                rating: self.lambda_r,
                generation: self.lambda_w,
            },
            batch_size: self.batch_size,
            schedule: LrScheduleConfig {
                initial_lr: self.lr,
                decay: self.lr_decay,
                stop_after: self.stop_after,
                rule: self.decay_rule,
            },
            clip_max_norm: self.clip_max_norm,
            max_epochs: self.max_epochs,
            keyword_mode: self.mode,
            ablate_diffusion: self.ablate_diffusion,
            restore_best: self.restore_best,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = toml::from_str::<RunConfig>("seed = 1\nlearning_rate = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("mode = \"F\"\nhorizon = 10\n").unwrap();
        assert_eq!(c.mode, KeywordMode::F);
        assert_eq!(c.horizon, 10);
        assert_eq!(c.batch_size, 32);
    }
}
