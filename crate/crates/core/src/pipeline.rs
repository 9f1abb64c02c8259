//! End-to-end training run: vocabulary, match-level split, encoding,
//! initialization, training and held-out evaluation.

use serde::{Deserialize, Serialize};

use crate::codec::corpus::{player_universe, split_by_match};
use crate::codec::{EncodeConfig, EncodedCorpus, Episode, Vocabulary};
use crate::error::Result;
use crate::model::{Checkpoint, ModelConfig, ModelParams};
use crate::train::{evaluate, train, EvalPoint, MetricReport, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Events kept per episode; also fixes the model context length.
    pub max_events: usize,
    pub holdout_fraction: f64,
    pub n_layers: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    pub init_scale: f64,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_events: 20,
            holdout_fraction: 0.1,
            n_layers: 4,
            n_heads: 4,
            embed_dim: 128,
            init_scale: 0.02,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn encode_config(&self) -> Result<EncodeConfig> {
        EncodeConfig::new(EncodeConfig::min_block_size(self.max_events), self.max_events)
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            vocab_size,
            block_size: self.encode_config()?.block_size,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            embed_dim: self.embed_dim,
            dropout_rate: 0.0,
            init_scale: self.init_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub checkpoint: Checkpoint,
    pub train_episodes: Vec<Episode>,
    pub heldout_episodes: Vec<Episode>,
    pub outcome: TrainOutcome,
    /// Absent when the held-out split is empty.
    pub report: Option<MetricReport>,
}

/// Trains a fresh model on `episodes`. The vocabulary covers every player
/// in the corpus so held-out players remain addressable.
pub fn run_training(
    episodes: &[Episode],
    cfg: &RunConfig,
    on_eval: impl FnMut(&EvalPoint, &ModelParams<f32>) -> Result<()>,
) -> Result<RunArtifacts> {
    let vocab = Vocabulary::new(player_universe(episodes))?;
    let enc = cfg.encode_config()?;
    let (train_eps, held_eps) = split_by_match(episodes, cfg.holdout_fraction);
    let train_corpus = EncodedCorpus::encode(&train_eps, &vocab, enc)?;
    let mut params = ModelParams::<f32>::init(cfg.model_config(vocab.size())?, cfg.init_seed)?;
    let outcome = train(&mut params, &vocab, &train_corpus, &cfg.train, on_eval)?;
    let report = if held_eps.is_empty() {
        None
    } else {
        Some(evaluate(&params, &vocab, &EncodedCorpus::encode(&held_eps, &vocab, enc)?)?)
    };
    let mut checkpoint = Checkpoint::new(params, vocab)?;
    checkpoint.meta = serde_json::json!({ "run_config": cfg, "steps": cfg.train.steps });
    Ok(RunArtifacts { checkpoint, train_episodes: train_eps, heldout_episodes: held_eps, outcome, report })
}
