//! Episode <-> token sequence codec.
//!
//! Layout: `[BOS][22 players][minute][6 counters]` followed by one 8-token
//! group per event `(player, team, type, x, y, delta, success, rOBV)`, then
//! `EPISODE_END` and right padding up to the block size.

use serde::{Deserialize, Serialize};

use super::action::{Action, ContextBlock, Episode, StartReason, TeamSide, PLAYERS_ON_PITCH};
use super::discretize::{discretize, undiscretize, AttributeKind};
use super::vocab::{Block, Vocabulary, BOS, EPISODE_END, PAD};
use crate::error::{Error, Result};

pub const CONTEXT_LEN: usize = 29;
pub const HEADER_LEN: usize = 1 + CONTEXT_LEN;
pub const EVENT_LEN: usize = 8;
pub const DEFAULT_MAX_EVENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Bos,
    ContextPlayer,
    Minute,
    Counter,
    Player,
    Team,
    ActionType,
    X,
    Y,
    Delta,
    Success,
    Robv,
    EpisodeEnd,
    Pad,
}

pub const EVENT_SLOTS: [Slot; EVENT_LEN] = [
    Slot::Player,
    Slot::Team,
    Slot::ActionType,
    Slot::X,
    Slot::Y,
    Slot::Delta,
    Slot::Success,
    Slot::Robv,
];

impl Slot {
    pub fn block(self) -> Block {
        match self {
            Slot::Bos | Slot::EpisodeEnd | Slot::Pad => Block::Special,
            Slot::ContextPlayer | Slot::Player => Block::Player,
            Slot::Minute => Block::Minute,
            Slot::Counter => Block::Count,
            Slot::Team => Block::Team,
            Slot::ActionType => Block::ActionType,
            Slot::X => Block::X,
            Slot::Y => Block::Y,
            Slot::Delta => Block::Delta,
            Slot::Success => Block::Success,
            Slot::Robv => Block::Robv,
        }
    }

    /// Whether a token in this slot is a prediction target.
    pub fn is_predicted(self) -> bool {
        matches!(
            self,
            Slot::Team
                | Slot::ActionType
                | Slot::X
                | Slot::Y
                | Slot::Delta
                | Slot::Success
                | Slot::Robv
                | Slot::EpisodeEnd
        )
    }

    fn special_token(self) -> Option<u32> {
        match self {
            Slot::Bos => Some(BOS),
            Slot::EpisodeEnd => Some(EPISODE_END),
            Slot::Pad => Some(PAD),
            _ => None,
        }
    }

    pub fn accepts(self, vocab: &Vocabulary, token: u32) -> bool {
        match self.special_token() {
            Some(t) => token == t,
            None => vocab.range(self.block()).contains(token),
        }
    }
}

/// Slot of a header position (BOS or context), `None` past the header.
pub fn header_slot(pos: usize) -> Option<Slot> {
    match pos {
        0 => Some(Slot::Bos),
        1..=22 => Some(Slot::ContextPlayer),
        23 => Some(Slot::Minute),
        24..=29 => Some(Slot::Counter),
        _ => None,
    }
}

/// Slot at `pos` assuming an event group occupies it.
pub fn event_slot(pos: usize) -> Option<Slot> {
    (pos >= HEADER_LEN).then(|| EVENT_SLOTS[(pos - HEADER_LEN) % EVENT_LEN])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub block_size: usize,
    pub max_events: usize,
}

impl EncodeConfig {
    pub fn new(block_size: usize, max_events: usize) -> Result<Self> {
        let cfg = Self { block_size, max_events };
        cfg.check()?;
        Ok(cfg)
    }

    /// Smallest block size that fits `max_events` events.
    pub fn min_block_size(max_events: usize) -> usize {
        HEADER_LEN + EVENT_LEN * max_events + 2
    }

    /// Largest configuration whose inputs fit a model context of
    /// `model_block_size` positions.
    pub fn fitting(model_block_size: usize) -> Result<Self> {
        let max_events = model_block_size.saturating_sub(HEADER_LEN + 1) / EVENT_LEN;
        Self::new(Self::min_block_size(max_events), max_events)
    }

    pub fn check(&self) -> Result<()> {
        if self.max_events == 0 {
            return Err(Error::InvalidArgument("max_events must be positive".into()));
        }
        if self.block_size < Self::min_block_size(self.max_events) {
            return Err(Error::InvalidArgument(format!(
                "block size {} too small for {} events (need {})",
                self.block_size,
                self.max_events,
                Self::min_block_size(self.max_events)
            )));
        }
        Ok(())
    }
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self { block_size: Self::min_block_size(DEFAULT_MAX_EVENTS), max_events: DEFAULT_MAX_EVENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedEpisode {
    pub tokens: Vec<u32>,
    /// `loss_mask[i]` is true when predicting `tokens[i + 1]` is supervised.
    pub loss_mask: Vec<bool>,
    pub slot_kind: Vec<Slot>,
    /// Offset of each encoded event's player token.
    pub event_boundaries: Vec<usize>,
    /// Number of tokens up to and including `EPISODE_END` (if present).
    pub len: usize,
    /// Index in the source episode of the first encoded event.
    pub first_event: usize,
}

impl EncodedEpisode {
    pub fn block_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_events(&self) -> usize {
        self.event_boundaries.len()
    }

    /// Recovers slot annotations for a raw token sequence by following the
    /// grammar. An event group may be followed by `EPISODE_END`, by `PAD`
    /// (treated as termination), or by the end of the sequence.
    pub fn from_tokens(tokens: Vec<u32>, vocab: &Vocabulary) -> Result<Self> {
        if tokens.len() < HEADER_LEN {
            return Err(Error::Grammar {
                position: tokens.len(),
                reason: "sequence shorter than the context header".into(),
            });
        }
        let mut slots = Vec::with_capacity(tokens.len());
        for pos in 0..HEADER_LEN {
            slots.push(header_slot(pos).unwrap());
        }
        let mut boundaries = Vec::new();
        let mut pos = HEADER_LEN;
        let mut len = tokens.len();
        while pos < tokens.len() {
            let t = tokens[pos];
            if t == EPISODE_END || t == PAD {
                let end_slot = if t == EPISODE_END { Slot::EpisodeEnd } else { Slot::Pad };
                slots.push(end_slot);
                len = if t == EPISODE_END { pos + 1 } else { pos };
                slots.extend(std::iter::repeat_n(Slot::Pad, tokens.len() - pos - 1));
                break;
            }
            if pos + EVENT_LEN > tokens.len() {
                return Err(Error::Grammar { position: pos, reason: "truncated event group".into() });
            }
            boundaries.push(pos);
            slots.extend(EVENT_SLOTS);
            pos += EVENT_LEN;
        }
        let loss_mask = loss_mask_for(&slots);
        let enc = Self { tokens, loss_mask, slot_kind: slots, event_boundaries: boundaries, len, first_event: 0 };
        enc.check_grammar(vocab)?;
        Ok(enc)
    }

    pub fn check_grammar(&self, vocab: &Vocabulary) -> Result<()> {
        if self.slot_kind.len() != self.tokens.len() || self.loss_mask.len() != self.tokens.len() {
            return Err(Error::Grammar { position: 0, reason: "annotation length mismatch".into() });
        }
        for (i, (&t, &s)) in self.tokens.iter().zip(&self.slot_kind).enumerate() {
            if !s.accepts(vocab, t) {
                return Err(Error::Grammar {
                    position: i,
                    reason: format!("token {t} is not a valid {s:?} token"),
                });
            }
        }
        Ok(())
    }
}

fn loss_mask_for(slots: &[Slot]) -> Vec<bool> {
    let mut mask = vec![false; slots.len()];
    for i in 0..slots.len().saturating_sub(1) {
        mask[i] = slots[i + 1].is_predicted();
    }
    mask
}

/// Residual value targets: `target[t] = sum of obv[t..]`.
pub fn compute_robv_targets(actions: &[Action]) -> Vec<f64> {
    let mut out = vec![0.0; actions.len()];
    let mut acc = 0.0;
    for (i, a) in actions.iter().enumerate().rev() {
        acc += a.obv;
        out[i] = acc;
    }
    out
}

pub fn encode_episode(ep: &Episode, vocab: &Vocabulary, cfg: EncodeConfig) -> Result<EncodedEpisode> {
    cfg.check()?;
    if ep.actions.is_empty() {
        return Err(Error::InvalidEpisode("episode has no actions".into()));
    }
    if ep.context.on_pitch.len() != PLAYERS_ON_PITCH {
        return Err(Error::InvalidEpisode(format!(
            "context lists {} players, expected {PLAYERS_ON_PITCH}",
            ep.context.on_pitch.len()
        )));
    }
    // Targets are taken over the whole episode before truncation so the
    // retained tail still carries the full residual value.
    let targets = compute_robv_targets(&ep.actions);
    let first = ep.actions.len().saturating_sub(cfg.max_events);

    let mut tokens = Vec::with_capacity(cfg.block_size);
    let mut slots = Vec::with_capacity(cfg.block_size);
    let mut push = |tokens: &mut Vec<u32>, t: u32, s: Slot| {
        tokens.push(t);
        slots.push(s);
    };

    push(&mut tokens, BOS, Slot::Bos);
    for &p in &ep.context.on_pitch {
        push(&mut tokens, vocab.player_token(p)?, Slot::ContextPlayer);
    }
    let ctx = ep.context.clone().clipped();
    push(
        &mut tokens,
        vocab.token(Block::Minute, discretize(AttributeKind::Minute, ctx.minute as f64)?)?,
        Slot::Minute,
    );
    for c in ctx.counters() {
        push(
            &mut tokens,
            vocab.token(Block::Count, discretize(AttributeKind::Counter, c as f64)?)?,
            Slot::Counter,
        );
    }

    let mut boundaries = Vec::with_capacity(ep.actions.len() - first);
    for (a, &target) in ep.actions[first..].iter().zip(&targets[first..]) {
        boundaries.push(tokens.len());
        let values = [
            vocab.player_token(a.actor_id)?,
            vocab.team_token(a.team_side),
            vocab.action_token(a.action_type)?,
            vocab.token(Block::X, discretize(AttributeKind::X, a.x)?)?,
            vocab.token(Block::Y, discretize(AttributeKind::Y, a.y)?)?,
            vocab.token(Block::Delta, discretize(AttributeKind::DeltaT, a.delta_t)?)?,
            vocab.token(Block::Success, a.success as u32)?,
            vocab.token(Block::Robv, discretize(AttributeKind::Robv, target)?)?,
        ];
        for (t, s) in values.into_iter().zip(EVENT_SLOTS) {
            push(&mut tokens, t, s);
        }
    }
    push(&mut tokens, EPISODE_END, Slot::EpisodeEnd);
    let len = tokens.len();
    while tokens.len() < cfg.block_size {
        push(&mut tokens, PAD, Slot::Pad);
    }
    let loss_mask = loss_mask_for(&slots);
    Ok(EncodedEpisode { tokens, loss_mask, slot_kind: slots, event_boundaries: boundaries, len, first_event: first })
}

/// Inverse of [`encode_episode`] on the discretized domain. Coordinates,
/// timing and values come back as bin centers; per-action OBV is recovered
/// from consecutive rOBV differences. Match id and start reason are not
/// encoded and come back empty / `Kickoff`.
pub fn decode_episode(enc: &EncodedEpisode, vocab: &Vocabulary) -> Result<Episode> {
    enc.check_grammar(vocab)?;
    let t = &enc.tokens;
    if enc.slot_kind.first() != Some(&Slot::Bos) {
        return Err(Error::Grammar { position: 0, reason: "missing BOS".into() });
    }
    let on_pitch = (1..=PLAYERS_ON_PITCH)
        .map(|i| vocab.player_of(t[i]).ok_or(Error::Grammar { position: i, reason: "expected player".into() }))
        .collect::<Result<Vec<_>>>()?;
    let minute = vocab.value_in(Block::Minute, t[23]).unwrap();
    let c: Vec<u32> = (24..30).map(|i| vocab.value_in(Block::Count, t[i]).unwrap()).collect();
    let context = ContextBlock {
        on_pitch,
        minute,
        home_goals: c[0],
        away_goals: c[1],
        home_reds: c[2],
        away_reds: c[3],
        home_yellows: c[4],
        away_yellows: c[5],
    };

    let mut actions = Vec::with_capacity(enc.event_boundaries.len());
    let mut robv = Vec::with_capacity(enc.event_boundaries.len());
    for &b in &enc.event_boundaries {
        let g = &t[b..b + EVENT_LEN];
        let val = |block: Block, k: usize| vocab.value_in(block, g[k]).unwrap();
        actions.push(Action {
            actor_id: vocab.player_of(g[0]).unwrap(),
            team_side: TeamSide::from_index(val(Block::Team, 1) as usize).unwrap(),
            action_type: vocab.action_of(g[2]).unwrap(),
            x: undiscretize(AttributeKind::X, val(Block::X, 3)),
            y: undiscretize(AttributeKind::Y, val(Block::Y, 4)),
            delta_t: undiscretize(AttributeKind::DeltaT, val(Block::Delta, 5)),
            success: val(Block::Success, 6) == 1,
            obv: 0.0,
        });
        robv.push(undiscretize(AttributeKind::Robv, val(Block::Robv, 7)));
    }
    for i in 0..actions.len() {
        let next = robv.get(i + 1).copied().unwrap_or(0.0);
        actions[i].obv = robv[i] - next;
    }
    Ok(Episode { context, actions, source_match_id: String::new(), start_reason: StartReason::Kickoff })
}
