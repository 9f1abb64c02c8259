//! Monte-Carlo estimate of the expected residual value of an action.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::{play_step, PlayState, StepEnd};
use super::league::SyntheticLeague;
use crate::codec::PlayerId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
}

impl OracleEstimate {
    /// Normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error)
    }
}

/// Mean summed OBV over `n_rollouts` continuations of `state` in which
/// `player_id` takes the first action. A rollout stops after `horizon`
/// actions or at the first restart.
pub fn oracle_residual_value(
    league: &SyntheticLeague,
    state: &PlayState,
    player_id: PlayerId,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    league.player(player_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_rollouts {
        let mut s = state.clone();
        let mut total = 0.0;
        for k in 0..horizon.max(1) {
            let forced = (k == 0).then_some(player_id);
            let step = play_step(league, &mut s, forced, &mut rng)?;
            total += step.provenance.value;
            if step.end != StepEnd::Continue {
                break;
            }
        }
        sum += total;
        sum_sq += total * total;
    }
    let n = n_rollouts as f64;
    let mean = sum / n;
    let var = if n_rollouts > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(OracleEstimate { mean, std_error: (var / n).sqrt(), n_rollouts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ActionType, TeamSide};
    use crate::synth::archetype::{Move, Zone, N_TYPES};
    use crate::synth::league::ValueSurface;

    fn state(league: &SyntheticLeague) -> PlayState {
        let mut s = PlayState::kickoff(league.squad(0)[..11].to_vec(), league.squad(1)[..11].to_vec(), TeamSide::Home);
        s.zone = Zone { zx: 8, zy: 4 };
        s
    }

    #[test]
    fn flat_surface_gives_zero() {
        let mut l = SyntheticLeague::default_league(0);
        l.value_surface = ValueSurface::zero();
        let est = oracle_residual_value(&l, &state(&l), 105, 10, 500, 1).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn deterministic_archetype_has_zero_variance() {
        let mut l = SyntheticLeague::default_league(0);
        let arch = &mut l.archetypes[4];
        let mut d = vec![0.0; N_TYPES];
        d[ActionType::Dribble.index()] = 1.0;
        arch.action_dist = [d.clone(), d.clone(), d];
        arch.success_rate[ActionType::Dribble.index()] = 1.0;
        arch.moves[ActionType::Dribble.index()] = vec![Move { dx: 1, dy: 0, p: 1.0 }];
        let dribbler = l.players_of_archetype("dribbler-forward")[0];
        let s = state(&l);
        let est = oracle_residual_value(&l, &s, dribbler, 1, 200, 3).unwrap();
        let phi = &l.value_surface;
        let single = phi.at(Zone { zx: 9, zy: 4 }) - phi.at(Zone { zx: 8, zy: 4 });
        assert_eq!(est.std_error, 0.0);
        assert!((est.mean - single).abs() < 1e-15);
    }

    #[test]
    fn zero_rollouts_and_unknown_player_are_errors() {
        let l = SyntheticLeague::default_league(0);
        assert!(oracle_residual_value(&l, &state(&l), 105, 5, 0, 1).is_err());
        assert!(oracle_residual_value(&l, &state(&l), 9999, 5, 10, 1).is_err());
    }
}
