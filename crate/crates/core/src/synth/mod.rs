//! Synthetic league with known player archetypes and a known value
//! surface, used as ground truth for learning and counterfactual checks.

pub mod archetype;
pub mod generator;
pub mod league;
pub mod oracle;

use serde::{Deserialize, Serialize};

pub use archetype::{default_archetypes, Archetype, RoleClass, Zone};
pub use generator::{
    generate_corpus, generate_match, simulate_match_log, MatchBookkeeping, PlayState, PlayerTally,
    SyntheticCorpus,
};
pub use league::{LeaguePlayer, SyntheticLeague, ValueSurface};
pub use oracle::{oracle_residual_value, OracleEstimate};

/// Sidecar written next to a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub matches: usize,
    pub action_types: Vec<String>,
    pub league: SyntheticLeague,
    pub player_tallies: std::collections::BTreeMap<crate::codec::PlayerId, PlayerTally>,
    pub restart_counts: Vec<usize>,
}

impl GroundTruth {
    pub fn new(league: &SyntheticLeague, corpus: &SyntheticCorpus, seed: u64) -> Self {
        Self {
            seed,
            matches: corpus.bookkeeping.len(),
            action_types: crate::codec::ActionType::ALL.iter().map(|t| t.name().to_string()).collect(),
            league: league.clone(),
            player_tallies: corpus.tallies(),
            restart_counts: corpus.bookkeeping.iter().map(|b| b.restart_count).collect(),
        }
    }

    /// `corpus.ndjson` -> `corpus.truth.json`.
    pub fn sidecar_path(corpus: &std::path::Path) -> std::path::PathBuf {
        corpus.with_extension("truth.json")
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> crate::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> crate::Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut truth: Self = serde_json::from_reader(f)?;
        truth.league = truth.league.reindexed()?;
        Ok(truth)
    }

    /// Archetype name of every league player.
    pub fn archetype_labels(&self) -> std::collections::BTreeMap<crate::codec::PlayerId, String> {
        self.league.players.iter().map(|p| (p.player_id, self.league.archetypes[p.archetype].name.clone())).collect()
    }

    pub fn role_of(&self, player: crate::codec::PlayerId) -> Option<RoleClass> {
        let p = self.league.players.iter().find(|p| p.player_id == player)?;
        Some(self.league.archetypes[p.archetype].role_class)
    }
}
