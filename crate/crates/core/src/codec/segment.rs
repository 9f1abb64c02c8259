//! Splitting a match into fixed-personnel episodes.

use serde::{Deserialize, Serialize};

use super::action::{Action, ContextBlock, Episode, PlayerId, StartReason, PLAYERS_ON_PITCH};
use crate::error::{Error, Result};

/// Scoreboard and clock at the moment an action is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchState {
    pub minute: u32,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_reds: u32,
    pub away_reds: u32,
    pub home_yellows: u32,
    pub away_yellows: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedAction {
    pub action: Action,
    pub state: MatchState,
}

/// A play reset or personnel change taking effect just before
/// `actions[at]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub at: usize,
    pub reason: StartReason,
    /// New lineup (home 1-11, away 1-11) when personnel changes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineup: Option<Vec<PlayerId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLog {
    pub match_id: String,
    pub initial_lineup: Vec<PlayerId>,
    pub actions: Vec<LoggedAction>,
    pub boundaries: Vec<Boundary>,
}

/// Partitions a match into episodes. A new episode starts at every
/// boundary; the first action of each episode gets `delta_t = 0`.
pub fn segment_episodes(log: &MatchLog) -> Result<Vec<Episode>> {
    if log.initial_lineup.len() != PLAYERS_ON_PITCH {
        return Err(Error::InvalidEpisode(format!(
            "lineup lists {} players, expected {PLAYERS_ON_PITCH}",
            log.initial_lineup.len()
        )));
    }
    let mut boundaries = log.boundaries.clone();
    boundaries.sort_by_key(|b| b.at);
    for w in boundaries.windows(2) {
        if w[0].at == w[1].at {
            return Err(Error::MalformedInput { index: w[0].at, reason: "two boundaries at the same action".into() });
        }
    }
    if let Some(b) = boundaries.iter().find(|b| b.at > log.actions.len()) {
        return Err(Error::MalformedInput { index: b.at, reason: "boundary past the last action".into() });
    }

    let mut lineup = log.initial_lineup.clone();
    let mut episodes = Vec::new();
    let mut reason = StartReason::Kickoff;
    let mut next_boundary = boundaries.iter().peekable();
    let mut start = 0;

    while start < log.actions.len() {
        while let Some(b) = next_boundary.next_if(|b| b.at <= start) {
            reason = b.reason;
            if let Some(l) = &b.lineup {
                if l.len() != PLAYERS_ON_PITCH {
                    return Err(Error::MalformedInput { index: b.at, reason: "personnel change with bad lineup".into() });
                }
                lineup = l.clone();
            }
        }
        let end = next_boundary.peek().map_or(log.actions.len(), |b| b.at);
        let s = log.actions[start].state;
        let context = ContextBlock {
            on_pitch: lineup.clone(),
            minute: s.minute,
            home_goals: s.home_goals,
            away_goals: s.away_goals,
            home_reds: s.home_reds,
            away_reds: s.away_reds,
            home_yellows: s.home_yellows,
            away_yellows: s.away_yellows,
        }
        .clipped();
        let mut actions: Vec<Action> = Vec::with_capacity(end - start);
        for (i, la) in log.actions[start..end].iter().enumerate() {
            if !context.contains(la.action.actor_id) {
                return Err(Error::MalformedInput {
                    index: start + i,
                    reason: format!("actor {} is not on the pitch", la.action.actor_id),
                });
            }
            actions.push(la.action.clone());
        }
        actions[0].delta_t = 0.0;
        episodes.push(Episode { context, actions, source_match_id: log.match_id.clone(), start_reason: reason });
        start = end;
    }
    Ok(episodes)
}
