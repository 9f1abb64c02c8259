//! Newline-delimited JSON episode corpora and dataset statistics.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::action::Episode;
use super::encode::{encode_episode, EncodeConfig, EncodedEpisode};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

pub fn write_corpus(path: impl AsRef<Path>, episodes: &[Episode]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(&mut w, episodes)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_to(w: &mut impl Write, episodes: &[Episode]) -> Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut *w, ep)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads and validates every episode; blank lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn read_corpus_from(r: impl BufRead) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidEpisode(format!("line {}: {e}", lineno + 1)))?;
        ep.validate()
            .map_err(|e| Error::InvalidEpisode(format!("line {}: {e}", lineno + 1)))?;
        out.push(ep);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub match_count: usize,
    pub episode_count: usize,
    pub mean_events_per_episode: f64,
    pub player_count: usize,
}

pub fn corpus_stats(episodes: &[Episode]) -> CorpusStats {
    if episodes.is_empty() {
        return CorpusStats::default();
    }
    let matches: HashSet<&str> = episodes.iter().map(|e| e.source_match_id.as_str()).collect();
    let players: HashSet<u32> = episodes.iter().flat_map(|e| e.context.on_pitch.iter().copied()).collect();
    let events: usize = episodes.iter().map(|e| e.actions.len()).sum();
    CorpusStats {
        match_count: matches.len(),
        episode_count: episodes.len(),
        mean_events_per_episode: events as f64 / episodes.len() as f64,
        player_count: players.len(),
    }
}

/// Every player appearing in a context block, sorted.
pub fn player_universe(episodes: &[Episode]) -> Vec<u32> {
    let mut ids: Vec<u32> = episodes
        .iter()
        .flat_map(|e| e.context.on_pitch.iter().copied())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    ids.sort_unstable();
    ids
}

/// Episodes encoded against one vocabulary, tagged with its hash.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub vocab_hash: String,
    pub config: EncodeConfig,
    pub episodes: Vec<EncodedEpisode>,
}

impl EncodedCorpus {
    pub fn encode(episodes: &[Episode], vocab: &Vocabulary, config: EncodeConfig) -> Result<Self> {
        let episodes = episodes
            .iter()
            .map(|e| encode_episode(e, vocab, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vocab_hash: vocab.hash(), config, episodes })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Splits by match id: matches whose position in sorted id order falls in
/// the last `holdout_fraction` go to the held-out side.
pub fn split_by_match(episodes: &[Episode], holdout_fraction: f64) -> (Vec<Episode>, Vec<Episode>) {
    let mut ids: Vec<&str> = episodes.iter().map(|e| e.source_match_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let n_hold = ((ids.len() as f64) * holdout_fraction.clamp(0.0, 1.0)).round() as usize;
    let held: HashSet<&str> = ids[ids.len() - n_hold..].iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for e in episodes {
        if held.contains(e.source_match_id.as_str()) {
            test.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    (train, test)
}
