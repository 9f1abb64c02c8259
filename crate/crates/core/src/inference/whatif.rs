//! Multi-episode what-if substitution runs shared by the CLI and the
//! HTTP service.

use serde::{Deserialize, Serialize};

use super::{reevaluate_robv, simulate_rollouts, summarize, SimOptions, SimulationResult, Substitution};
use crate::analytics::ProfileCounter;
use crate::codec::encode::HEADER_LEN;
use crate::codec::{EncodeConfig, Episode, PlayerId, Vocabulary, EVENT_LEN};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::synth::RoleClass;

fn default_n() -> usize {
    30
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_events() -> usize {
    20
}
fn default_max_episodes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub out_player: PlayerId,
    pub in_player: PlayerId,
    /// Corpus indices of the episodes to simulate. When absent, the first
    /// `max_episodes` episodes in which `out_player` acts within the simulated
    /// horizon are used.
    #[serde(default)]
    pub episode_ids: Option<Vec<usize>>,
    #[serde(default = "default_max_episodes")]
    pub max_episodes: usize,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub role_class: Option<RoleClass>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

impl WhatIfRequest {
    pub fn new(out_player: PlayerId, in_player: PlayerId) -> Self {
        Self {
            out_player,
            in_player,
            episode_ids: None,
            max_episodes: default_max_episodes(),
            n_samples: default_n(),
            temperature: default_temperature(),
            role_class: None,
            seed: 0,
            max_events: default_max_events(),
        }
    }

    fn options(&self) -> SimOptions {
        SimOptions {
            n_samples: self.n_samples,
            max_events: self.max_events,
            temperature: self.temperature,
            seed: self.seed,
            role_class: self.role_class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBreakdown {
    pub episode_id: usize,
    pub source_match_id: String,
    pub simulated_robv: f64,
    pub baseline_simulated_robv: f64,
    pub reevaluated_robv: Option<f64>,
    pub baseline_reevaluated_robv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub substitution: Substitution,
    pub n_samples_per_episode: usize,
    pub temperature: f64,
    pub seed: u64,
    pub role_class: Option<RoleClass>,
    /// Rollouts with the incoming player, pooled over episodes.
    pub result: SimulationResult,
    /// The same rollouts (same random streams) with the original player.
    pub baseline: SimulationResult,
    /// Teacher-forced expected rOBV over the player's events, substituted.
    pub reevaluated_robv: Option<f64>,
    pub baseline_reevaluated_robv: Option<f64>,
    pub episodes: Vec<EpisodeBreakdown>,
    /// Selected episodes in which the player never acts within the
    /// simulated events.
    pub skipped_episodes: Vec<usize>,
}

fn horizon(ep: &Episode, req: &WhatIfRequest, capacity: usize) -> usize {
    ep.actions.len().min(req.max_events).min(capacity)
}

fn select(episodes: &[Episode], req: &WhatIfRequest, capacity: usize) -> Result<Vec<usize>> {
    match &req.episode_ids {
        Some(ids) => {
            if ids.is_empty() {
                return Err(Error::InvalidArgument("episode_ids is empty".into()));
            }
            for &i in ids {
                let ep = episodes.get(i).ok_or_else(|| Error::InvalidArgument(format!("episode {i} does not exist")))?;
                if !ep.context.contains(req.out_player) {
                    return Err(Error::Substitution(format!("player {} is not on the pitch in episode {i}", req.out_player)));
                }
            }
            Ok(ids.clone())
        }
        None => {
            let ids: Vec<usize> = episodes
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    e.actions[..horizon(e, req, capacity)].iter().any(|a| a.actor_id == req.out_player)
                        && (req.in_player == req.out_player || !e.context.contains(req.in_player))
                })
                .map(|(i, _)| i)
                .take(req.max_episodes)
                .collect();
            if ids.is_empty() {
                return Err(Error::Substitution(format!("no episode where player {} acts can take the substitution", req.out_player)));
            }
            Ok(ids)
        }
    }
}

// Separates the random streams of different episodes.
const STREAM_STRIDE: u64 = 1 << 32;

pub fn run_whatif(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    encode: EncodeConfig,
    episodes: &[Episode],
    req: &WhatIfRequest,
) -> Result<WhatIfReport> {
    let sub = Substitution::new(req.out_player, req.in_player);
    let identity = Substitution::new(req.out_player, req.out_player);
    let opts = req.options();
    let capacity = (params.config.block_size + 1).saturating_sub(HEADER_LEN) / EVENT_LEN;
    let ids = select(episodes, req, capacity)?;

    let (mut samples, mut base_samples) = (Vec::new(), Vec::new());
    let (mut profile, mut base_profile) = (ProfileCounter::default(), ProfileCounter::default());
    let (mut re_all, mut re_base_all) = (Vec::new(), Vec::new());
    let mut breakdown = Vec::new();
    let mut skipped = Vec::new();
    for &i in &ids {
        let ep = &episodes[i];
        let stream = i as u64 * STREAM_STRIDE;
        if !ep.actions[..horizon(ep, req, capacity)].iter().any(|a| a.actor_id == req.out_player) {
            skipped.push(i);
            continue;
        }
        let sim = simulate_rollouts(params, vocab, ep, sub, &opts, stream)?;
        let base = simulate_rollouts(params, vocab, ep, identity, &opts, stream)?;
        let re = reevaluate_robv(params, vocab, ep, sub, encode)?;
        let ep_sim = summarize(sim.robv_samples.clone(), &sim.profile, req.role_class)?;
        let ep_base = summarize(base.robv_samples.clone(), &base.profile, req.role_class)?;
        breakdown.push(EpisodeBreakdown {
            episode_id: i,
            source_match_id: ep.source_match_id.clone(),
            simulated_robv: ep_sim.aggregate_robv,
            baseline_simulated_robv: ep_base.aggregate_robv,
            reevaluated_robv: re.substituted_mean,
            baseline_reevaluated_robv: re.baseline_mean,
        });
        samples.extend(sim.robv_samples);
        base_samples.extend(base.robv_samples);
        profile.merge(&sim.profile);
        base_profile.merge(&base.profile);
        re_all.extend(re.substituted);
        re_base_all.extend(re.baseline);
    }
    if samples.is_empty() {
        return Err(Error::Substitution(format!("player {} does not act in any simulated event", req.out_player)));
    }
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(WhatIfReport {
        substitution: sub,
        n_samples_per_episode: req.n_samples,
        temperature: req.temperature,
        seed: req.seed,
        role_class: req.role_class,
        result: summarize(samples, &profile, req.role_class)?,
        baseline: summarize(base_samples, &base_profile, req.role_class)?,
        reevaluated_robv: avg(&re_all),
        baseline_reevaluated_robv: avg(&re_base_all),
        episodes: breakdown,
        skipped_episodes: skipped,
    })
}
