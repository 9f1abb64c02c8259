//! Unified token index space.
//!
//! Every attribute owns a contiguous, disjoint range of token ids. The
//! ranges are laid out in a fixed block order so that a manifest (block
//! names, offsets, sizes, action-type table and player table) fully
//! describes the mapping and can be hashed to pin checkpoints to corpora.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::action::{ActionType, PlayerId, TeamSide};
use super::discretize::{COUNT_BINS, DELTA_BINS, MINUTE_BINS, ROBV_BINS, X_BINS, Y_BINS};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EPISODE_END: u32 = 2;
const SPECIAL_COUNT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Special,
    Player,
    Team,
    ActionType,
    X,
    Y,
    Delta,
    Success,
    Robv,
    Minute,
    Count,
}

impl Block {
    pub const ORDER: [Block; 11] = [
        Block::Special,
        Block::Player,
        Block::Team,
        Block::ActionType,
        Block::X,
        Block::Y,
        Block::Delta,
        Block::Success,
        Block::Robv,
        Block::Minute,
        Block::Count,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Special => "special",
            Block::Player => "player",
            Block::Team => "team",
            Block::ActionType => "action_type",
            Block::X => "x",
            Block::Y => "y",
            Block::Delta => "delta",
            Block::Success => "success",
            Block::Robv => "robv",
            Block::Minute => "minute",
            Block::Count => "count",
        }
    }

    fn position(self) -> usize {
        Block::ORDER.iter().position(|&b| b == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub offset: u32,
    pub size: u32,
}

impl BlockRange {
    pub fn contains(&self, token: u32) -> bool {
        token >= self.offset && token < self.offset + self.size
    }

    pub fn end(&self) -> u32 {
        self.offset + self.size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBlock {
    pub name: String,
    pub offset: u32,
    pub size: u32,
}

/// Self-describing JSON form of a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub blocks: Vec<ManifestBlock>,
    pub action_types: Vec<String>,
    pub player_ids: Vec<PlayerId>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    player_ids: Vec<PlayerId>,
    player_index: HashMap<PlayerId, u32>,
    action_types: Vec<ActionType>,
    action_index: HashMap<ActionType, u32>,
    ranges: [BlockRange; 11],
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.player_ids == other.player_ids && self.action_types == other.action_types
    }
}

impl Vocabulary {
    /// Builds a vocabulary over the given player universe and the full
    /// SPADL action-type set. Player ids are sorted and deduplicated.
    pub fn new(player_ids: impl IntoIterator<Item = PlayerId>) -> Result<Self> {
        Self::with_action_types(player_ids, ActionType::ALL.to_vec())
    }

    pub fn with_action_types(
        player_ids: impl IntoIterator<Item = PlayerId>,
        action_types: Vec<ActionType>,
    ) -> Result<Self> {
        let mut players: Vec<PlayerId> = player_ids.into_iter().collect();
        players.sort_unstable();
        players.dedup();
        if players.len() < 22 {
            return Err(Error::InvalidArgument(format!(
                "player universe has {} players, need at least 22",
                players.len()
            )));
        }
        if action_types.is_empty() {
            return Err(Error::InvalidArgument("empty action-type set".into()));
        }
        let mut action_index = HashMap::new();
        for (i, t) in action_types.iter().enumerate() {
            if action_index.insert(*t, i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("action type {t} listed twice")));
            }
        }
        let sizes = [
            SPECIAL_COUNT,
            players.len() as u32,
            2,
            action_types.len() as u32,
            X_BINS,
            Y_BINS,
            DELTA_BINS,
            2,
            ROBV_BINS,
            MINUTE_BINS,
            COUNT_BINS,
        ];
        let mut ranges = [BlockRange { offset: 0, size: 0 }; 11];
        let mut offset = 0;
        for (r, size) in ranges.iter_mut().zip(sizes) {
            *r = BlockRange { offset, size };
            offset += size;
        }
        let player_index = players.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
        Ok(Self { player_ids: players, player_index, action_types, action_index, ranges })
    }

    pub fn size(&self) -> usize {
        self.ranges[10].end() as usize
    }

    pub fn range(&self, block: Block) -> BlockRange {
        self.ranges[block.position()]
    }

    pub fn player_ids(&self) -> &[PlayerId] {
        &self.player_ids
    }

    pub fn action_types(&self) -> &[ActionType] {
        &self.action_types
    }

    pub fn token(&self, block: Block, value: u32) -> Result<u32> {
        let r = self.range(block);
        if value >= r.size {
            return Err(Error::Domain(format!(
                "value {value} outside {} block of size {}",
                block.name(),
                r.size
            )));
        }
        Ok(r.offset + value)
    }

    /// Maps a token id back to its (block, in-block value) pair.
    pub fn classify(&self, token: u32) -> Option<(Block, u32)> {
        // Blocks are contiguous and ordered, so the first range whose end
        // exceeds the token owns it.
        self.ranges
            .iter()
            .zip(Block::ORDER)
            .find(|(r, _)| token < r.end())
            .map(|(r, b)| (b, token - r.offset))
    }

    pub fn value_in(&self, block: Block, token: u32) -> Option<u32> {
        let r = self.range(block);
        r.contains(token).then(|| token - r.offset)
    }

    pub fn player_token(&self, player: PlayerId) -> Result<u32> {
        let idx = self.player_index.get(&player).ok_or(Error::UnknownPlayer(player))?;
        Ok(self.range(Block::Player).offset + idx)
    }

    pub fn player_of(&self, token: u32) -> Option<PlayerId> {
        self.value_in(Block::Player, token).map(|i| self.player_ids[i as usize])
    }

    pub fn contains_player(&self, player: PlayerId) -> bool {
        self.player_index.contains_key(&player)
    }

    pub fn team_token(&self, side: TeamSide) -> u32 {
        self.range(Block::Team).offset + side.index() as u32
    }

    pub fn action_token(&self, t: ActionType) -> Result<u32> {
        let idx = self
            .action_index
            .get(&t)
            .ok_or_else(|| Error::Domain(format!("action type {t} not in vocabulary")))?;
        Ok(self.range(Block::ActionType).offset + idx)
    }

    pub fn action_of(&self, token: u32) -> Option<ActionType> {
        self.value_in(Block::ActionType, token).map(|i| self.action_types[i as usize])
    }

    pub fn manifest(&self) -> VocabManifest {
        VocabManifest {
            blocks: Block::ORDER
                .iter()
                .zip(&self.ranges)
                .map(|(b, r)| ManifestBlock { name: b.name().to_string(), offset: r.offset, size: r.size })
                .collect(),
            action_types: self.action_types.iter().map(|t| t.name().to_string()).collect(),
            player_ids: self.player_ids.clone(),
        }
    }

    pub fn from_manifest(m: &VocabManifest) -> Result<Self> {
        let types = m
            .action_types
            .iter()
            .map(|s| s.parse::<ActionType>())
            .collect::<Result<Vec<_>>>()?;
        let vocab = Self::with_action_types(m.player_ids.iter().copied(), types)?;
        if vocab.manifest() != *m {
            return Err(Error::Checkpoint("vocabulary manifest block table is inconsistent".into()));
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the manifest's canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let m: VocabManifest = serde_json::from_slice(&fs::read(path)?)?;
        Self::from_manifest(&m)
    }
}
