//! Teacher-forced training loop and held-out evaluation.

pub mod metrics;
pub mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::vocab::BlockRange;
use crate::codec::{EncodedCorpus, EncodedEpisode, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{backward, forward, ModelParams, Scalar, TokenBatch};
pub use metrics::{MetricAccumulator, MetricReport};
pub use optim::{clip_global_norm, AdamW};

/// Learning-rate multiplier over the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup, then cosine decay to `final_fraction` of the base rate.
    Cosine { warmup_steps: usize, final_fraction: f64 },
}

impl LrSchedule {
    /// Learning rate for the zero-based `step` of a `total`-step run.
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { warmup_steps, final_fraction } => {
                if step < warmup_steps {
                    return base * (step + 1) as f64 / warmup_steps as f64;
                }
                let span = total.saturating_sub(warmup_steps).max(1) as f64;
                let progress = ((step - warmup_steps) as f64 / span).min(1.0);
                let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                base * (final_fraction + (1.0 - final_fraction) * cos)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub eval_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 16, steps: 1000, learning_rate: 3e-4, lr_schedule: LrSchedule::Constant, weight_decay: 0.01, grad_clip_norm: 1.0, eval_interval: 100, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::InvalidArgument("batch_size and eval_interval must be positive".into()));
        }
        if !positive(self.learning_rate) || !positive(self.grad_clip_norm) {
            return Err(Error::InvalidArgument("learning_rate and grad_clip_norm must be positive".into()));
        }
        if let LrSchedule::Cosine { final_fraction, .. } = self.lr_schedule {
            if !(0.0..=1.0).contains(&final_fraction) {
                return Err(Error::InvalidArgument("final_fraction must lie in [0, 1]".into()));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Inputs, next-token targets and loss mask for a group of episodes,
/// trimmed to the longest episode in the group.
#[derive(Debug, Clone)]
pub struct Batch {
    pub tokens: TokenBatch,
    pub targets: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Batch {
    pub fn new(episodes: &[&EncodedEpisode]) -> Result<Self> {
        let longest = episodes.iter().map(|e| e.len).max().ok_or_else(|| Error::Empty("empty batch".into()))?;
        let t = longest.saturating_sub(1).max(1);
        let n = episodes.len();
        let (mut tokens, mut targets, mut mask) = (Vec::with_capacity(n * t), Vec::with_capacity(n * t), Vec::with_capacity(n * t));
        for e in episodes {
            if e.tokens.len() < t + 1 {
                return Err(Error::Shape("episode shorter than the batch width".into()));
            }
            tokens.extend_from_slice(&e.tokens[..t]);
            targets.extend_from_slice(&e.tokens[1..=t]);
            mask.extend_from_slice(&e.loss_mask[..t]);
        }
        Ok(Self { tokens: TokenBatch::new(n, t, tokens)?, targets, mask })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Mean training loss over the steps since the previous point.
    pub train_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Loss of every optimizer step, before its update.
    pub losses: Vec<f64>,
    pub evals: Vec<EvalPoint>,
}

fn check_compat(params: &ModelParams<f32>, vocab: &Vocabulary, corpus: &EncodedCorpus) -> Result<()> {
    let hash = vocab.hash();
    if corpus.vocab_hash != hash {
        return Err(Error::VocabMismatch { expected: hash, found: corpus.vocab_hash.clone() });
    }
    if params.config.vocab_size != vocab.size() {
        return Err(Error::VocabMismatch {
            expected: format!("{} tokens", params.config.vocab_size),
            found: format!("{} tokens", vocab.size()),
        });
    }
    if corpus.config.block_size > params.config.block_size + 1 {
        // Inputs drop the final token, so the model needs block_size - 1 positions.
        return Err(Error::ContextOverflow { needed: corpus.config.block_size - 1, block_size: params.config.block_size });
    }
    Ok(())
}

/// Runs `cfg.steps` AdamW updates on shuffled batches. `on_eval` sees the
/// parameters after every `eval_interval` steps and after the last step.
pub fn train(
    params: &mut ModelParams<f32>,
    vocab: &Vocabulary,
    corpus: &EncodedCorpus,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&EvalPoint, &ModelParams<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compat(params, vocab, corpus)?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus has no episodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lens: Vec<usize> = corpus.episodes.iter().map(|e| e.len).collect();
    let mut schedule: Vec<Vec<usize>> = Vec::new();
    let mut opt = AdamW::new(params.data.len(), cfg.weight_decay);
    let mut out = TrainOutcome::default();
    let mut window = Vec::new();
    for step in 0..cfg.steps {
        if schedule.is_empty() {
            schedule = epoch_batches(&lens, cfg.batch_size, &mut rng);
        }
        let picked: Vec<&EncodedEpisode> = schedule.pop().unwrap().into_iter().map(|i| &corpus.episodes[i]).collect();
        let batch = Batch::new(&picked)?;
        let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, cfg.steps);
        let loss = train_step(params, &mut opt, &batch, cfg.grad_clip_norm, lr)?;
        out.losses.push(loss);
        window.push(loss);
        if (step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.steps {
            let point = EvalPoint { step: step + 1, train_loss: window.iter().sum::<f64>() / window.len() as f64 };
            window.clear();
            on_eval(&point, params)?;
            out.evals.push(point);
        }
    }
    Ok(out)
}

const BUCKET_BATCHES: usize = 32;

/// One epoch of batches in random order. Episodes are shuffled, then sorted
/// by length within windows of `BUCKET_BATCHES` batches so that each batch
/// holds episodes of similar length and little padding. Every episode is
/// used once; the last batch of an epoch may be short, and corpora smaller
/// than one batch are cycled to fill it.
fn epoch_batches(lens: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lens.len()).collect();
    order.shuffle(rng);
    while order.len() < batch_size {
        let extra: Vec<usize> = order.iter().copied().take(batch_size - order.len()).collect();
        order.extend(extra);
    }
    let mut batches = Vec::new();
    for window in order.chunks_mut(batch_size * BUCKET_BATCHES) {
        window.sort_by_key(|&i| lens[i]);
        batches.extend(window.chunks(batch_size).map(|b| b.to_vec()));
    }
    batches.shuffle(rng);
    batches
}

/// One optimizer update on a fixed batch; returns the pre-update loss.
pub fn train_step(params: &mut ModelParams<f32>, opt: &mut AdamW, batch: &Batch, grad_clip_norm: f64, lr: f64) -> Result<f64> {
    let pass = forward(params, &batch.tokens)?;
    let (loss, mut grads) = backward(params, &pass, &batch.targets, &batch.mask)?;
    drop(pass);
    clip_global_norm(&mut grads, grad_clip_norm);
    opt.update(params, &grads, lr);
    Ok(loss)
}

/// Index within `range` of the largest logit; ties go to the lowest index.
pub fn block_argmax<T: Scalar>(logits: &[T], range: BlockRange) -> u32 {
    let slice = &logits[range.offset as usize..range.end() as usize];
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate() {
        if v > slice[best] {
            best = i;
        }
    }
    best as u32
}

const EVAL_BATCH: usize = 16;

/// Teacher-forced evaluation with grammar-restricted argmax at every
/// loss-masked position.
pub fn evaluate(params: &ModelParams<f32>, vocab: &Vocabulary, corpus: &EncodedCorpus) -> Result<MetricReport> {
    check_compat(params, vocab, corpus)?;
    if corpus.is_empty() {
        return Err(Error::Empty("held-out corpus has no episodes".into()));
    }
    let mut acc = MetricAccumulator::new();
    for group in corpus.episodes.chunks(EVAL_BATCH) {
        let refs: Vec<&EncodedEpisode> = group.iter().collect();
        let batch = Batch::new(&refs)?;
        let pass = forward(params, &batch.tokens)?;
        let t = batch.tokens.t;
        for (b, ep) in group.iter().enumerate() {
            for pos in 0..t {
                if !batch.mask[b * t + pos] {
                    continue;
                }
                let slot = ep.slot_kind[pos + 1];
                debug_assert!(slot.is_predicted());
                let range = vocab.range(slot.block());
                let target = batch.targets[b * t + pos];
                let Some(target_value) = vocab.value_in(slot.block(), target) else { continue };
                let predicted = block_argmax(pass.logits_at(b, pos), range);
                acc.record(slot, predicted, target_value);
            }
        }
    }
    acc.report()
}
