//! Event codec: domain model, segmentation, discretization, vocabulary and
//! the episode token layout.

pub mod action;
pub mod corpus;
pub mod discretize;
pub mod encode;
pub mod segment;
pub mod vocab;

pub use action::{
    Action, ActionType, ContextBlock, Episode, PlayerId, ProfileGroup, StartReason, TeamSide,
};
pub use corpus::{corpus_stats, read_corpus, write_corpus, CorpusStats, EncodedCorpus};
pub use discretize::{discretize, undiscretize, AttributeKind};
pub use encode::{
    compute_robv_targets, decode_episode, encode_episode, EncodeConfig, EncodedEpisode, Slot,
    EVENT_LEN, HEADER_LEN,
};
pub use segment::{segment_episodes, Boundary, LoggedAction, MatchLog, MatchState};
pub use vocab::{Block, Vocabulary, VocabManifest};
