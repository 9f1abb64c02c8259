use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::archetype::{default_archetypes, Archetype, Zone, ZONES_X, ZONES_Y};
use crate::codec::PlayerId;
use crate::error::{Error, Result};

/// Scoring potential per zone, seen from the attacking team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    /// `grid[zx][zy]`.
    pub grid: Vec<Vec<f64>>,
    /// Value of a scored goal.
    pub goal: f64,
}

impl ValueSurface {
    /// 12x8 surface increasing toward the opponent goal and peaking
    /// centrally.
    pub fn default_surface() -> Self {
        const LENGTH: [f64; ZONES_X as usize] =
            [0.002, 0.004, 0.006, 0.009, 0.013, 0.018, 0.025, 0.035, 0.05, 0.075, 0.12, 0.2];
        const WIDTH: [f64; ZONES_Y as usize] = [0.6, 0.8, 0.95, 1.0, 1.0, 0.95, 0.8, 0.6];
        let grid = LENGTH.iter().map(|&l| WIDTH.iter().map(|&w| l * w).collect()).collect();
        Self { grid, goal: 1.0 }
    }

    pub fn zero() -> Self {
        Self { grid: vec![vec![0.0; ZONES_Y as usize]; ZONES_X as usize], goal: 0.0 }
    }

    pub fn at(&self, z: Zone) -> f64 {
        self.grid[z.zx as usize][z.zy as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaguePlayer {
    pub player_id: PlayerId,
    pub team: usize,
    pub archetype: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticLeague {
    pub archetypes: Vec<Archetype>,
    pub players: Vec<LeaguePlayer>,
    pub value_surface: ValueSurface,
    /// Failure penalty: a failed action is worth `-lambda * phi(start)`.
    pub failure_penalty: f64,
    pub rng_seed: u64,
    #[serde(skip)]
    index: HashMap<PlayerId, usize>,
}

/// Squad template of the default league: archetype index per squad slot.
/// Slots 0..11 start, 11..14 are the bench.
const SQUAD: [usize; 14] = [0, 1, 1, 2, 2, 3, 3, 3, 4, 4, 5, 0, 2, 5];

impl SyntheticLeague {
    pub fn new(
        archetypes: Vec<Archetype>,
        players: Vec<LeaguePlayer>,
        value_surface: ValueSurface,
        failure_penalty: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        for a in &archetypes {
            a.validate().map_err(Error::InvalidArgument)?;
        }
        let mut league = Self { archetypes, players, value_surface, failure_penalty, rng_seed, index: HashMap::new() };
        league.reindex()?;
        Ok(league)
    }

    /// Four teams of fourteen players drawn from the six default archetypes.
    pub fn default_league(rng_seed: u64) -> Self {
        let players = (0..4)
            .flat_map(|team| {
                SQUAD.iter().enumerate().map(move |(slot, &archetype)| LeaguePlayer {
                    player_id: 100 * (team as u32 + 1) + slot as u32 + 1,
                    team,
                    archetype,
                })
            })
            .collect();
        Self::new(default_archetypes(), players, ValueSurface::default_surface(), 0.2, rng_seed)
            .expect("default league is valid")
    }

    fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, p) in self.players.iter().enumerate() {
            if p.archetype >= self.archetypes.len() {
                return Err(Error::InvalidArgument(format!("player {} has unknown archetype", p.player_id)));
            }
            if self.index.insert(p.player_id, i).is_some() {
                return Err(Error::InvalidArgument(format!("player {} listed twice", p.player_id)));
            }
        }
        Ok(())
    }

    /// Restores the lookup index after deserialization.
    pub fn reindexed(mut self) -> Result<Self> {
        self.reindex()?;
        Ok(self)
    }

    pub fn player(&self, id: PlayerId) -> Result<&LeaguePlayer> {
        self.index.get(&id).map(|&i| &self.players[i]).ok_or(Error::UnknownPlayer(id))
    }

    pub fn archetype_of(&self, id: PlayerId) -> Result<&Archetype> {
        Ok(&self.archetypes[self.player(id)?.archetype])
    }

    pub fn player_ids(&self) -> Vec<PlayerId> {
        self.players.iter().map(|p| p.player_id).collect()
    }

    pub fn team_count(&self) -> usize {
        self.players.iter().map(|p| p.team + 1).max().unwrap_or(0)
    }

    pub fn squad(&self, team: usize) -> Vec<PlayerId> {
        self.players.iter().filter(|p| p.team == team).map(|p| p.player_id).collect()
    }

    pub fn players_of_archetype(&self, name: &str) -> Vec<PlayerId> {
        self.players
            .iter()
            .filter(|p| self.archetypes[p.archetype].name == name)
            .map(|p| p.player_id)
            .collect()
    }

    /// Matchday squad for `team` in match number `round`: 11 starters
    /// (rotating keepers, defenders and forwards across rounds) followed by
    /// the bench.
    pub fn matchday_squad(&self, team: usize, round: usize) -> Vec<PlayerId> {
        let squad = self.squad(team);
        if squad.len() != SQUAD.len() {
            // Non-default squads: first eleven start.
            return squad;
        }
        let mut order: Vec<usize> = (0..14).collect();
        if round % 2 == 1 {
            order.swap(0, 11); // keeper
            order.swap(10, 13); // poacher
        }
        match round % 3 {
            1 => order.swap(3, 12),
            2 => order.swap(4, 12),
            _ => {}
        }
        order.into_iter().map(|i| squad[i]).collect()
    }
}
