//! SPADL-style domain model: actions, context blocks and episodes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PITCH_LENGTH: f64 = 105.0;
pub const PITCH_WIDTH: f64 = 68.0;
pub const PLAYERS_ON_PITCH: usize = 22;

pub type PlayerId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeamSide {
    Home,
    Away,
}

impl TeamSide {
    pub fn index(self) -> usize {
        match self {
            TeamSide::Home => 0,
            TeamSide::Away => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(TeamSide::Home),
            1 => Some(TeamSide::Away),
            _ => None,
        }
    }

    pub fn opponent(self) -> Self {
        match self {
            TeamSide::Home => TeamSide::Away,
            TeamSide::Away => TeamSide::Home,
        }
    }
}

macro_rules! action_types {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The 22 SPADL action types (the `non_action` filler is excluded).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum ActionType {
            $($variant),+
        }

        impl ActionType {
            pub const ALL: &'static [ActionType] = &[$(ActionType::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(ActionType::$variant => $name),+
                }
            }
        }

        impl FromStr for ActionType {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(ActionType::$variant),)+
                    other => Err(Error::Domain(format!("unknown action type {other:?}"))),
                }
            }
        }
    };
}

action_types! {
    Pass => "pass",
    Cross => "cross",
    ThrowIn => "throw_in",
    FreekickCrossed => "freekick_crossed",
    FreekickShort => "freekick_short",
    CornerCrossed => "corner_crossed",
    CornerShort => "corner_short",
    TakeOn => "take_on",
    Foul => "foul",
    Tackle => "tackle",
    Interception => "interception",
    Shot => "shot",
    ShotPenalty => "shot_penalty",
    ShotFreekick => "shot_freekick",
    KeeperSave => "keeper_save",
    KeeperClaim => "keeper_claim",
    KeeperPunch => "keeper_punch",
    KeeperPickUp => "keeper_pick_up",
    Clearance => "clearance",
    BadTouch => "bad_touch",
    Dribble => "dribble",
    Goalkick => "goalkick",
}

impl ActionType {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Coarse grouping used by the case-study style action profiles.
    pub fn profile_group(self) -> ProfileGroup {
        use ActionType::*;
        match self {
            Dribble | TakeOn => ProfileGroup::Dribble,
            Pass | Cross | ThrowIn | FreekickCrossed | FreekickShort | CornerCrossed
            | CornerShort | Goalkick => ProfileGroup::Pass,
            Shot | ShotPenalty | ShotFreekick => ProfileGroup::Shot,
            Tackle | Interception | Clearance | Foul | KeeperSave | KeeperClaim | KeeperPunch
            | KeeperPickUp => ProfileGroup::Defensive,
            BadTouch => ProfileGroup::Other,
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileGroup {
    Dribble,
    Pass,
    Shot,
    Defensive,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub actor_id: PlayerId,
    pub team_side: TeamSide,
    pub action_type: ActionType,
    pub x: f64,
    pub y: f64,
    pub delta_t: f64,
    pub success: bool,
    pub obv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartReason {
    Kickoff,
    SetPiece,
    GoalRestart,
    PeriodStart,
    PersonnelChange,
}

pub const MAX_MINUTE: u32 = 130;
pub const MAX_GOALS: u32 = 15;
pub const MAX_REDS: u32 = 5;
pub const MAX_YELLOWS: u32 = 11;

/// Match state snapshot at the start of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    /// Home players 1-11 followed by away players 1-11.
    pub on_pitch: Vec<PlayerId>,
    pub minute: u32,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_reds: u32,
    pub away_reds: u32,
    pub home_yellows: u32,
    pub away_yellows: u32,
}

impl ContextBlock {
    pub fn validate(&self) -> Result<()> {
        if self.on_pitch.len() != PLAYERS_ON_PITCH {
            return Err(Error::InvalidEpisode(format!(
                "context lists {} players, expected {PLAYERS_ON_PITCH}",
                self.on_pitch.len()
            )));
        }
        let mut seen = HashSet::with_capacity(PLAYERS_ON_PITCH);
        for &p in &self.on_pitch {
            if !seen.insert(p) {
                return Err(Error::InvalidEpisode(format!("player {p} listed twice in context")));
            }
        }
        let checks = [
            ("minute", self.minute, MAX_MINUTE),
            ("home_goals", self.home_goals, MAX_GOALS),
            ("away_goals", self.away_goals, MAX_GOALS),
            ("home_reds", self.home_reds, MAX_REDS),
            ("away_reds", self.away_reds, MAX_REDS),
            ("home_yellows", self.home_yellows, MAX_YELLOWS),
            ("away_yellows", self.away_yellows, MAX_YELLOWS),
        ];
        for (name, value, cap) in checks {
            if value > cap {
                return Err(Error::InvalidEpisode(format!("{name} = {value} exceeds {cap}")));
            }
        }
        Ok(())
    }

    /// Clamp every counter into its admissible range.
    pub fn clipped(mut self) -> Self {
        self.minute = self.minute.min(MAX_MINUTE);
        self.home_goals = self.home_goals.min(MAX_GOALS);
        self.away_goals = self.away_goals.min(MAX_GOALS);
        self.home_reds = self.home_reds.min(MAX_REDS);
        self.away_reds = self.away_reds.min(MAX_REDS);
        self.home_yellows = self.home_yellows.min(MAX_YELLOWS);
        self.away_yellows = self.away_yellows.min(MAX_YELLOWS);
        self
    }

    /// Counters in token order: goals, reds, yellows (home before away).
    pub fn counters(&self) -> [u32; 6] {
        [
            self.home_goals,
            self.away_goals,
            self.home_reds,
            self.away_reds,
            self.home_yellows,
            self.away_yellows,
        ]
    }

    pub fn side_of(&self, player: PlayerId) -> Option<TeamSide> {
        let pos = self.on_pitch.iter().position(|&p| p == player)?;
        Some(if pos < 11 { TeamSide::Home } else { TeamSide::Away })
    }

    pub fn contains(&self, player: PlayerId) -> bool {
        self.on_pitch.contains(&player)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub context: ContextBlock,
    pub actions: Vec<Action>,
    pub source_match_id: String,
    pub start_reason: StartReason,
}

impl Episode {
    pub fn validate(&self) -> Result<()> {
        self.context.validate()?;
        if self.actions.is_empty() {
            return Err(Error::InvalidEpisode("episode has no actions".into()));
        }
        for (i, a) in self.actions.iter().enumerate() {
            if !self.context.contains(a.actor_id) {
                return Err(Error::MalformedInput {
                    index: i,
                    reason: format!("actor {} is not on the pitch", a.actor_id),
                });
            }
            if !(a.x.is_finite() && (0.0..PITCH_LENGTH).contains(&a.x)) {
                return Err(Error::MalformedInput { index: i, reason: format!("x = {} out of range", a.x) });
            }
            if !(a.y.is_finite() && (0.0..PITCH_WIDTH).contains(&a.y)) {
                return Err(Error::MalformedInput { index: i, reason: format!("y = {} out of range", a.y) });
            }
            if !(a.delta_t.is_finite() && a.delta_t >= 0.0) {
                return Err(Error::MalformedInput {
                    index: i,
                    reason: format!("delta_t = {} is negative or non-finite", a.delta_t),
                });
            }
            if !a.obv.is_finite() {
                return Err(Error::MalformedInput { index: i, reason: "obv is not finite".into() });
            }
        }
        if self.actions[0].delta_t != 0.0 {
            return Err(Error::MalformedInput { index: 0, reason: "first action must have delta_t = 0".into() });
        }
        Ok(())
    }

    /// Indices of actions performed by `player`.
    pub fn actions_by(&self, player: PlayerId) -> impl Iterator<Item = usize> + '_ {
        self.actions
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.actor_id == player)
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_two_action_types_round_trip_names() {
        assert_eq!(ActionType::ALL.len(), 22);
        for (i, t) in ActionType::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.name().parse::<ActionType>().unwrap(), *t);
        }
        assert!("non_action".parse::<ActionType>().is_err());
    }

    #[test]
    fn context_rejects_duplicates_and_short_lists() {
        let mut ctx = ContextBlock {
            on_pitch: (0..22).collect(),
            minute: 10,
            home_goals: 0,
            away_goals: 0,
            home_reds: 0,
            away_reds: 0,
            home_yellows: 0,
            away_yellows: 0,
        };
        assert!(ctx.validate().is_ok());
        ctx.on_pitch[5] = 0;
        assert!(ctx.validate().is_err());
        ctx.on_pitch.truncate(21);
        assert!(ctx.validate().is_err());
    }

    #[test]
    fn side_lookup_follows_listing_order() {
        let ctx = ContextBlock {
            on_pitch: (100..122).collect(),
            minute: 0,
            home_goals: 0,
            away_goals: 0,
            home_reds: 0,
            away_reds: 0,
            home_yellows: 0,
            away_yellows: 0,
        };
        assert_eq!(ctx.side_of(100), Some(TeamSide::Home));
        assert_eq!(ctx.side_of(110), Some(TeamSide::Home));
        assert_eq!(ctx.side_of(111), Some(TeamSide::Away));
        assert_eq!(ctx.side_of(5), None);
    }
}
