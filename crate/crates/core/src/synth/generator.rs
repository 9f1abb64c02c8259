//! Possession-chain match generator.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archetype::{RoleClass, Zone, N_TYPES, THIRDS};
use super::league::SyntheticLeague;
use crate::codec::{
    segment_episodes, Action, ActionType, Boundary, Episode, LoggedAction, MatchLog, MatchState,
    PlayerId, StartReason, TeamSide,
};
use crate::error::{Error, Result};

const HALF_SECONDS: u32 = 45 * 60;
const FULL_SECONDS: u32 = 90 * 60;
/// Share of failed open-play actions that put the ball out of play.
const OUT_OF_PLAY: f64 = 0.3;
const YELLOW_ON_FAILURE: f64 = 0.03;
const SUB_MINUTES: [u32; 2] = [60, 75];

pub(crate) fn sample_index(rng: &mut impl Rng, weights: impl IntoIterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().into_iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.into_iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

fn delta_range(t: ActionType) -> (u32, u32) {
    use ActionType::*;
    match t {
        Pass | Cross | Clearance => (1, 4),
        Dribble => (2, 5),
        TakeOn | Shot | Tackle | Interception => (1, 3),
        BadTouch => (1, 2),
        _ => (2, 6),
    }
}

/// Ball and personnel state during open play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayState {
    /// Home and away players on the pitch, 11 each.
    pub lineups: [Vec<PlayerId>; 2],
    pub possession: TeamSide,
    /// Ball zone from the possessing team's attacking direction.
    pub zone: Zone,
}

impl PlayState {
    pub fn kickoff(home: Vec<PlayerId>, away: Vec<PlayerId>, side: TeamSide) -> Self {
        Self { lineups: [home, away], possession: side, zone: Zone { zx: 5, zy: 4 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObvEnd {
    Zone(Zone),
    Goal,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObvProvenance {
    pub start: Zone,
    pub end: ObvEnd,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepEnd {
    Continue,
    Restart(StartReason),
}

pub(crate) struct Step {
    pub actor: PlayerId,
    pub side: TeamSide,
    pub action_type: ActionType,
    pub start: Zone,
    pub success: bool,
    pub provenance: ObvProvenance,
    pub end: StepEnd,
}

/// One action of open play. The actor is drawn from the possessing team
/// unless `forced_actor` is given; the state is advanced in place.
pub(crate) fn play_step(
    league: &SyntheticLeague,
    state: &mut PlayState,
    forced_actor: Option<PlayerId>,
    rng: &mut impl Rng,
) -> Result<Step> {
    let side = state.possession;
    let third = state.zone.third();
    let actor = match forced_actor {
        Some(p) => p,
        None => {
            let squad = &state.lineups[side.index()];
            let mut weights = Vec::with_capacity(squad.len());
            for &p in squad {
                weights.push(league.archetype_of(p)?.role_class.presence()[third]);
            }
            squad[sample_index(rng, weights)]
        }
    };
    let arch = league.archetype_of(actor)?;
    let action_type = ActionType::ALL[sample_index(rng, arch.action_dist[third].iter().copied())];
    let success = rng.random::<f64>() < arch.success_rate[action_type.index()];
    let start = state.zone;
    let phi = &league.value_surface;
    let penalty = -league.failure_penalty * phi.at(start);

    let (end, value, step_end) = if action_type.profile_group() == crate::codec::ProfileGroup::Shot {
        if success {
            state.possession = side.opponent();
            state.zone = Zone { zx: 5, zy: 4 };
            (ObvEnd::Goal, phi.goal - phi.at(start), StepEnd::Restart(StartReason::GoalRestart))
        } else {
            state.possession = side.opponent();
            state.zone = Zone::new(0, rng.random_range(2..6));
            (ObvEnd::Lost, penalty, StepEnd::Restart(StartReason::SetPiece))
        }
    } else if success {
        let options = arch.zone_transition(start, action_type);
        let next = options[sample_index(rng, options.iter().map(|(_, p)| *p))].0;
        state.zone = next;
        (ObvEnd::Zone(next), phi.at(next) - phi.at(start), StepEnd::Continue)
    } else {
        state.possession = side.opponent();
        state.zone = start.mirrored();
        let end = if rng.random::<f64>() < OUT_OF_PLAY {
            StepEnd::Restart(StartReason::SetPiece)
        } else {
            StepEnd::Continue
        };
        (ObvEnd::Lost, penalty, end)
    };
    Ok(Step {
        actor,
        side,
        action_type,
        start,
        success,
        provenance: ObvProvenance { start, end, value },
        end: step_end,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayerTally {
    /// Action counts per third and action type.
    pub counts: [[u32; N_TYPES]; THIRDS],
    pub successes: u32,
}

impl PlayerTally {
    pub fn total(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    pub fn third_totals(&self) -> [f64; THIRDS] {
        let mut out = [0.0; THIRDS];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            *o = row.iter().sum::<u32>() as f64;
        }
        out
    }

    pub fn type_frequencies(&self) -> Vec<f64> {
        let total = self.total() as f64;
        (0..N_TYPES)
            .map(|t| self.counts.iter().map(|row| row[t]).sum::<u32>() as f64 / total.max(1.0))
            .collect()
    }

    pub fn merge(&mut self, other: &PlayerTally) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.successes += other.successes;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchBookkeeping {
    pub match_id: String,
    /// Number of episode boundaries after kickoff (restarts, period
    /// transitions, personnel changes).
    pub restart_count: usize,
    pub episode_count: usize,
    pub action_count: usize,
    pub tallies: BTreeMap<PlayerId, PlayerTally>,
    pub provenance: Vec<ObvProvenance>,
}

/// Plays out a full match. `home_ids` / `away_ids` list eleven starters
/// followed by optional bench players, who come on like-for-like at the
/// first restart after the planned substitution minutes.
pub fn simulate_match_log(
    league: &SyntheticLeague,
    home_ids: &[PlayerId],
    away_ids: &[PlayerId],
    seed: u64,
    match_id: &str,
) -> Result<(MatchLog, MatchBookkeeping)> {
    let mut seen = HashSet::new();
    for &p in home_ids.iter().chain(away_ids) {
        league.player(p)?;
        if !seen.insert(p) {
            return Err(Error::InvalidArgument(format!("player {p} appears twice in the match squads")));
        }
    }
    if home_ids.len() < 11 || away_ids.len() < 11 {
        return Err(Error::InvalidArgument("each side needs eleven starters".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PlayState::kickoff(home_ids[..11].to_vec(), away_ids[..11].to_vec(), TeamSide::Home);
    let initial_lineup: Vec<PlayerId> = home_ids[..11].iter().chain(&away_ids[..11]).copied().collect();
    let benches = [plan_subs(league, home_ids)?, plan_subs(league, away_ids)?];

    let mut score = MatchState::default();
    let mut clock = 0u32;
    let mut second_half = false;
    let mut subs_made = 0usize;
    let mut pending: Option<StartReason> = None;
    let mut first_of_episode = true;

    let mut actions = Vec::new();
    let mut boundaries = Vec::new();
    let mut tallies: BTreeMap<PlayerId, PlayerTally> = BTreeMap::new();
    let mut provenance = Vec::new();

    loop {
        if !second_half && clock >= HALF_SECONDS {
            second_half = true;
            clock = HALF_SECONDS;
            state.possession = TeamSide::Away;
            state.zone = Zone { zx: 5, zy: 4 };
            pending = Some(StartReason::PeriodStart);
            first_of_episode = true;
        }
        if clock >= FULL_SECONDS {
            break;
        }
        if let Some(mut reason) = pending.take() {
            let mut lineup = None;
            while subs_made < SUB_MINUTES.len() && clock >= SUB_MINUTES[subs_made] * 60 {
                for side in 0..2 {
                    if let Some(&(out, inn)) = benches[side].get(subs_made) {
                        let slot = state.lineups[side].iter().position(|&p| p == out).unwrap();
                        state.lineups[side][slot] = inn;
                    }
                }
                subs_made += 1;
                reason = StartReason::PersonnelChange;
                lineup = Some(state.lineups[0].iter().chain(&state.lineups[1]).copied().collect());
            }
            boundaries.push(Boundary { at: actions.len(), reason, lineup });
        }

        let step = play_step(league, &mut state, None, &mut rng)?;
        let delta = if first_of_episode {
            0
        } else {
            let (lo, hi) = delta_range(step.action_type);
            rng.random_range(lo..=hi)
        };
        clock += delta;
        score.minute = clock / 60;
        let x = ((step.start.zx as f64 + rng.random::<f64>()) * Zone::cell_width()).min(104.99);
        let y = ((step.start.zy as f64 + rng.random::<f64>()) * Zone::cell_height()).min(67.99);

        actions.push(LoggedAction {
            action: Action {
                actor_id: step.actor,
                team_side: step.side,
                action_type: step.action_type,
                x,
                y,
                delta_t: delta as f64,
                success: step.success,
                obv: step.provenance.value,
            },
            state: score,
        });
        let tally = tallies.entry(step.actor).or_default();
        tally.counts[step.start.third()][step.action_type.index()] += 1;
        tally.successes += step.success as u32;
        provenance.push(step.provenance);
        first_of_episode = false;

        if step.provenance.end == ObvEnd::Goal {
            match step.side {
                TeamSide::Home => score.home_goals += 1,
                TeamSide::Away => score.away_goals += 1,
            }
        }
        if !step.success && rng.random::<f64>() < YELLOW_ON_FAILURE {
            match step.side {
                TeamSide::Home => score.home_yellows += 1,
                TeamSide::Away => score.away_yellows += 1,
            }
        }
        if let StepEnd::Restart(reason) = step.end {
            pending = Some(reason);
            first_of_episode = true;
            clock += match reason {
                StartReason::GoalRestart => 45,
                _ => rng.random_range(8..=25),
            };
        }
    }

    let bookkeeping = MatchBookkeeping {
        match_id: match_id.to_string(),
        restart_count: boundaries.len(),
        episode_count: boundaries.len() + 1,
        action_count: actions.len(),
        tallies,
        provenance,
    };
    let log = MatchLog { match_id: match_id.to_string(), initial_lineup, actions, boundaries };
    Ok((log, bookkeeping))
}

/// Like-for-like substitutions: each non-keeper bench player replaces the
/// first starter of the same archetype.
fn plan_subs(league: &SyntheticLeague, squad: &[PlayerId]) -> Result<Vec<(PlayerId, PlayerId)>> {
    let mut subs = Vec::new();
    let mut used = HashSet::new();
    for &bench in &squad[11..] {
        let arch = league.player(bench)?.archetype;
        if league.archetypes[arch].role_class == RoleClass::Keeper {
            continue;
        }
        for &starter in &squad[..11] {
            if league.player(starter)?.archetype == arch && used.insert(starter) {
                subs.push((starter, bench));
                break;
            }
        }
    }
    Ok(subs)
}

pub fn generate_match(
    league: &SyntheticLeague,
    home_ids: &[PlayerId],
    away_ids: &[PlayerId],
    seed: u64,
) -> Result<(Vec<Episode>, MatchBookkeeping)> {
    let match_id = format!("synth-{seed:016x}");
    let (log, book) = simulate_match_log(league, home_ids, away_ids, seed, &match_id)?;
    let episodes = segment_episodes(&log)?;
    debug_assert_eq!(episodes.len(), book.episode_count);
    Ok((episodes, book))
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub episodes: Vec<Episode>,
    pub bookkeeping: Vec<MatchBookkeeping>,
}

impl SyntheticCorpus {
    /// Per-player tallies summed over all matches.
    pub fn tallies(&self) -> BTreeMap<PlayerId, PlayerTally> {
        let mut out: BTreeMap<PlayerId, PlayerTally> = BTreeMap::new();
        for b in &self.bookkeeping {
            for (p, t) in &b.tallies {
                out.entry(*p).or_default().merge(t);
            }
        }
        out
    }
}

const PAIRINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

pub fn match_seed(corpus_seed: u64, index: usize) -> u64 {
    corpus_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Round-robin season over the league's first four teams.
pub fn generate_corpus(league: &SyntheticLeague, matches: usize, seed: u64) -> Result<SyntheticCorpus> {
    if league.team_count() < 4 {
        return Err(Error::InvalidArgument("corpus generation needs four teams".into()));
    }
    let mut episodes = Vec::new();
    let mut bookkeeping = Vec::new();
    for m in 0..matches {
        let round = m / 2;
        let (mut h, mut a) = PAIRINGS[round % 3][m % 2];
        if (round / 3) % 2 == 1 {
            std::mem::swap(&mut h, &mut a);
        }
        let home = league.matchday_squad(h, round);
        let away = league.matchday_squad(a, round);
        let match_id = format!("synth-{seed}-{m:04}");
        let (log, book) = simulate_match_log(league, &home, &away, match_seed(seed, m), &match_id)?;
        episodes.extend(segment_episodes(&log)?);
        bookkeeping.push(book);
    }
    Ok(SyntheticCorpus { episodes, bookkeeping })
}
