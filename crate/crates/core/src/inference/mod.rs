//! Constrained generation, counterfactual substitution and value
//! aggregation.

pub mod whatif;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{ActionProfile, ProfileCounter};
use crate::codec::encode::{EVENT_SLOTS, HEADER_LEN};
use crate::codec::{encode_episode, undiscretize, AttributeKind, Block, EncodeConfig, Episode, PlayerId, Slot, TeamSide, Vocabulary, EVENT_LEN};
use crate::error::{Error, Result};
use crate::model::{forward, Decoder, ModelParams, TokenBatch};
use crate::synth::RoleClass;
use crate::train::block_argmax;

pub use whatif::{run_whatif, EpisodeBreakdown, WhatIfReport, WhatIfRequest};

/// Replace `out_player` by `in_player`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub out_player: PlayerId,
    pub in_player: PlayerId,
}

impl Substitution {
    pub fn new(out_player: PlayerId, in_player: PlayerId) -> Self {
        Self { out_player, in_player }
    }

    pub fn is_identity(&self) -> bool {
        self.out_player == self.in_player
    }

    /// The episode with `out_player` replaced in the context block and in
    /// every action it performed. Nothing else changes.
    pub fn apply(&self, ep: &Episode, vocab: &Vocabulary) -> Result<Episode> {
        for p in [self.out_player, self.in_player] {
            if !vocab.contains_player(p) {
                return Err(Error::UnknownPlayer(p));
            }
        }
        if !ep.context.contains(self.out_player) {
            return Err(Error::Substitution(format!("player {} is not on the pitch in this episode", self.out_player)));
        }
        if !self.is_identity() && ep.context.contains(self.in_player) {
            return Err(Error::Substitution(format!("player {} is already on the pitch", self.in_player)));
        }
        let mut out = ep.clone();
        for p in out.context.on_pitch.iter_mut().filter(|p| **p == self.out_player) {
            *p = self.in_player;
        }
        for a in out.actions.iter_mut().filter(|a| a.actor_id == self.out_player) {
            a.actor_id = self.in_player;
        }
        Ok(out)
    }
}

/// Mean of the rOBV bin centers under the softmax of the rOBV block.
pub fn expected_robv(logits: &[f32], vocab: &Vocabulary) -> f64 {
    let r = vocab.range(Block::Robv);
    let block = &logits[r.offset as usize..r.end() as usize];
    let max = block.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let (mut z, mut acc) = (0.0, 0.0);
    for (b, &l) in block.iter().enumerate() {
        let w = (l as f64 - max).exp();
        z += w;
        acc += w * undiscretize(AttributeKind::Robv, b as u32);
    }
    acc / z
}

/// Token-level counterfactual re-evaluation of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reevaluation {
    /// Source indices of the events performed by the substituted player.
    pub event_indices: Vec<usize>,
    /// Expected rOBV at those events with the original player.
    pub baseline: Vec<f64>,
    /// Expected rOBV at those events with the incoming player.
    pub substituted: Vec<f64>,
    pub baseline_mean: Option<f64>,
    pub substituted_mean: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn robv_readout(params: &ModelParams<f32>, vocab: &Vocabulary, ep: &Episode, player: PlayerId, cfg: EncodeConfig) -> Result<(Vec<usize>, Vec<f64>)> {
    let enc = encode_episode(ep, vocab, cfg)?;
    let t = enc.len - 1;
    if t > params.config.block_size {
        return Err(Error::ContextOverflow { needed: t, block_size: params.config.block_size });
    }
    let pass = forward(params, &TokenBatch::single(&enc.tokens[..t])?)?;
    let token = vocab.player_token(player)?;
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (k, &b) in enc.event_boundaries.iter().enumerate() {
        if enc.tokens[b] == token {
            idx.push(enc.first_event + k);
            // The rOBV token sits at b + 7 and is predicted from b + 6.
            vals.push(expected_robv(pass.logits_at(0, b + EVENT_LEN - 2), vocab));
        }
    }
    Ok((idx, vals))
}

/// Teacher-forced expected rOBV at every event of the substituted player,
/// with and without the substitution. Only the context entry and the
/// player's own actor tokens change.
pub fn reevaluate_robv(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    ep: &Episode,
    sub: Substitution,
    cfg: EncodeConfig,
) -> Result<Reevaluation> {
    let modified = sub.apply(ep, vocab)?;
    let (event_indices, baseline) = robv_readout(params, vocab, ep, sub.out_player, cfg)?;
    let substituted = if sub.is_identity() {
        baseline.clone()
    } else {
        robv_readout(params, vocab, &modified, sub.in_player, cfg)?.1
    };
    Ok(Reevaluation { baseline_mean: mean(&baseline), substituted_mean: mean(&substituted), event_indices, baseline, substituted })
}

/// Draws one token from the slot's block at `temperature`; zero means
/// in-block argmax.
pub fn sample_in_block(logits: &[f32], vocab: &Vocabulary, slot: Slot, temperature: f64, rng: &mut impl Rng) -> u32 {
    let r = vocab.range(slot.block());
    if temperature <= 0.0 {
        return r.offset + block_argmax(logits, r);
    }
    let block = &logits[r.offset as usize..r.end() as usize];
    let max = block.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let weights: Vec<f64> = block.iter().map(|&l| ((l as f64 - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return r.offset + i as u32;
        }
        u -= w;
    }
    // Floating-point slack: fall back to the last positive-weight bin.
    r.offset + weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u32
}

/// Generates one event on a decoder that has consumed a grammatical prefix
/// ending just before an event. The player token is forced; the team token
/// is forced when given, otherwise sampled like the other six attributes.
/// On return the decoder has consumed every token except the final rOBV
/// token, which the caller feeds before continuing.
pub fn sample_event_with(
    dec: &mut Decoder<'_, f32>,
    vocab: &Vocabulary,
    player_token: u32,
    team_token: Option<u32>,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<[u32; EVENT_LEN]> {
    let mut ev = [0u32; EVENT_LEN];
    ev[0] = player_token;
    dec.push(player_token)?;
    for k in 1..EVENT_LEN {
        let slot = EVENT_SLOTS[k];
        let tok = match (slot, team_token) {
            (Slot::Team, Some(t)) => t,
            _ => sample_in_block(dec.logits(), vocab, slot, temperature, rng),
        };
        ev[k] = tok;
        if k + 1 < EVENT_LEN {
            dec.push(tok)?;
        }
    }
    Ok(ev)
}

/// Samples the next event after `prefix` with the acting player forced.
pub fn sample_next_event(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    prefix: &[u32],
    acting_player: PlayerId,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<[u32; EVENT_LEN]> {
    let needed = prefix.len() + EVENT_LEN - 1;
    if needed > params.config.block_size {
        return Err(Error::ContextOverflow { needed, block_size: params.config.block_size });
    }
    if prefix.len() < HEADER_LEN || (prefix.len() - HEADER_LEN) % EVENT_LEN != 0 {
        return Err(Error::Grammar { position: prefix.len(), reason: "prefix does not end on an event boundary".into() });
    }
    let token = vocab.player_token(acting_player)?;
    if !prefix[1..=22].contains(&token) {
        return Err(Error::InvalidArgument(format!("player {acting_player} is not in the prefix's context block")));
    }
    let mut dec = Decoder::new(params);
    dec.push_all(prefix)?;
    sample_event_with(&mut dec, vocab, token, None, temperature, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    TopQuartileMean,
}

impl Aggregation {
    pub fn for_role(role: Option<RoleClass>) -> Self {
        match role {
            Some(RoleClass::Attacker) => Aggregation::TopQuartileMean,
            _ => Aggregation::Mean,
        }
    }
}

/// Mean of the `ceil(n / 4)` largest samples.
pub fn top_quartile_mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to aggregate".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let k = samples.len().div_ceil(4);
    Ok(s[..k].iter().sum::<f64>() / k as f64)
}

/// Attackers use the top-quartile mean, every other role the plain mean.
pub fn aggregate_robv(samples: &[f64], role: Option<RoleClass>) -> Result<(f64, Aggregation)> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to aggregate".into()));
    }
    let agg = Aggregation::for_role(role);
    let v = match agg {
        Aggregation::TopQuartileMean => top_quartile_mean(samples)?,
        Aggregation::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
    };
    Ok((v, agg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_samples: usize,
    pub max_events: usize,
    pub temperature: f64,
    pub seed: u64,
    pub role_class: Option<RoleClass>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { n_samples: 30, max_events: 20, temperature: 1.0, seed: 0, role_class: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// One value per rollout: the mean sampled rOBV over the substituted
    /// player's generated events.
    pub robv_samples: Vec<f64>,
    /// Pooled over every event the substituted player generated.
    pub action_profile: ActionProfile,
    pub n_samples: usize,
    pub aggregation_used: Aggregation,
    pub aggregate_robv: f64,
}

/// Raw output of the rollouts of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollouts {
    /// Generated event tokens per rollout.
    pub events: Vec<Vec<[u32; EVENT_LEN]>>,
    pub robv_samples: Vec<f64>,
    pub profile: ProfileCounter,
}

/// Free-running generation under the substituted context. Actors follow the
/// source episode's actor sequence (with the substitution applied); team
/// tokens follow the actors' sides; all other attributes are sampled.
/// Rollout `i` draws from its own ChaCha stream `stream_base + i`.
pub fn simulate_rollouts(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    ep: &Episode,
    sub: Substitution,
    opts: &SimOptions,
    stream_base: u64,
) -> Result<Rollouts> {
    if opts.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !(opts.temperature >= 0.0 && opts.temperature.is_finite()) {
        return Err(Error::InvalidArgument("temperature must be finite and non-negative".into()));
    }
    let modified = sub.apply(ep, vocab)?;
    let capacity = (params.config.block_size + 1).saturating_sub(HEADER_LEN) / EVENT_LEN;
    let n_events = modified.actions.len().min(opts.max_events).min(capacity);
    if n_events == 0 {
        return Err(Error::ContextOverflow { needed: HEADER_LEN + EVENT_LEN - 1, block_size: params.config.block_size });
    }
    let schedule: Vec<(u32, u32, bool)> = modified.actions[..n_events]
        .iter()
        .map(|a| {
            let side = modified.context.side_of(a.actor_id).unwrap_or(TeamSide::Home);
            Ok((vocab.player_token(a.actor_id)?, vocab.team_token(side), a.actor_id == sub.in_player))
        })
        .collect::<Result<_>>()?;
    if !schedule.iter().any(|s| s.2) {
        return Err(Error::Substitution(format!("player {} does not act in the simulated events", sub.out_player)));
    }

    // Shared header: BOS and the modified context block.
    let header = encode_episode(&modified, vocab, EncodeConfig::new(EncodeConfig::min_block_size(1), 1)?)?;
    let mut base = Decoder::new(params);
    base.push_all(&header.tokens[..HEADER_LEN])?;

    let type_block = vocab.range(Block::ActionType);
    let mut out = Rollouts { events: Vec::with_capacity(opts.n_samples), robv_samples: Vec::with_capacity(opts.n_samples), profile: ProfileCounter::default() };
    for i in 0..opts.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(stream_base + i as u64);
        let mut dec = base.clone();
        let mut events = Vec::with_capacity(n_events);
        let mut values = Vec::new();
        for &(player, team, is_sub) in &schedule {
            if let Some(prev) = events.last().map(|e: &[u32; EVENT_LEN]| e[EVENT_LEN - 1]) {
                dec.push(prev)?;
            }
            let ev = sample_event_with(&mut dec, vocab, player, Some(team), opts.temperature, &mut rng)?;
            if is_sub {
                let bin = vocab.value_in(Block::Robv, ev[7]).unwrap_or(0);
                values.push(undiscretize(AttributeKind::Robv, bin));
                let t = vocab.action_types()[(ev[2] - type_block.offset) as usize];
                out.profile.add(t, vocab.value_in(Block::Success, ev[6]) == Some(1));
            }
            events.push(ev);
        }
        out.robv_samples.push(values.iter().sum::<f64>() / values.len() as f64);
        out.events.push(events);
    }
    Ok(out)
}

pub fn summarize(robv_samples: Vec<f64>, profile: &ProfileCounter, role: Option<RoleClass>) -> Result<SimulationResult> {
    let (aggregate_robv, aggregation_used) = aggregate_robv(&robv_samples, role)?;
    Ok(SimulationResult {
        n_samples: robv_samples.len(),
        robv_samples,
        action_profile: profile.profile()?,
        aggregation_used,
        aggregate_robv,
    })
}

pub fn simulate_substitution(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    ep: &Episode,
    sub: Substitution,
    opts: &SimOptions,
) -> Result<SimulationResult> {
    let r = simulate_rollouts(params, vocab, ep, sub, opts, 0)?;
    summarize(r.robv_samples, &r.profile, opts.role_class)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartile_arithmetic() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(aggregate_robv(&s, Some(RoleClass::Attacker)).unwrap(), (4.0, Aggregation::TopQuartileMean));
        assert_eq!(aggregate_robv(&s, Some(RoleClass::Midfielder)).unwrap(), (2.5, Aggregation::Mean));
        assert_eq!(top_quartile_mean(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap(), 4.5);
        assert!(aggregate_robv(&[], None).is_err());
    }
}
