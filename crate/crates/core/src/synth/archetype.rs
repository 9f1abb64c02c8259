//! Player archetypes: the generating parameters behind synthetic players.

use serde::{Deserialize, Serialize};

use crate::codec::ActionType;

pub const N_TYPES: usize = 22;
pub const THIRDS: usize = 3;
pub const ZONES_X: u8 = 12;
pub const ZONES_Y: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Zone {
    pub zx: u8,
    pub zy: u8,
}

impl Zone {
    pub fn new(zx: i32, zy: i32) -> Self {
        Self { zx: zx.clamp(0, ZONES_X as i32 - 1) as u8, zy: zy.clamp(0, ZONES_Y as i32 - 1) as u8 }
    }

    /// The same cell seen from the opposing team's attacking direction.
    pub fn mirrored(self) -> Self {
        Self { zx: ZONES_X - 1 - self.zx, zy: ZONES_Y - 1 - self.zy }
    }

    /// 0 = defensive, 1 = middle, 2 = attacking third.
    pub fn third(self) -> usize {
        (self.zx / 4) as usize
    }

    pub fn cell_width() -> f64 {
        105.0 / ZONES_X as f64
    }

    pub fn cell_height() -> f64 {
        68.0 / ZONES_Y as f64
    }

    pub fn of_point(x: f64, y: f64) -> Self {
        Self::new((x / Self::cell_width()).floor() as i32, (y / Self::cell_height()).floor() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleClass {
    Attacker,
    Midfielder,
    Defender,
    Keeper,
}

impl RoleClass {
    /// Relative likelihood of being the actor when the ball is in each third.
    pub fn presence(self) -> [f64; THIRDS] {
        match self {
            RoleClass::Keeper => [1.2, 0.15, 0.05],
            RoleClass::Defender => [1.0, 0.6, 0.25],
            RoleClass::Midfielder => [0.5, 1.0, 0.6],
            RoleClass::Attacker => [0.2, 0.6, 1.2],
        }
    }
}

/// Ball displacement on success, in zone units, with its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub dx: i8,
    pub dy: i8,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub role_class: RoleClass,
    /// Per third, a categorical distribution over [`ActionType::ALL`].
    pub action_dist: [Vec<f64>; THIRDS],
    /// Per action type (indexed like [`ActionType::ALL`]).
    pub success_rate: Vec<f64>,
    /// Per action type, displacement distribution of a successful action.
    pub moves: Vec<Vec<Move>>,
}

impl Archetype {
    /// Categorical distribution of the end zone of a successful action.
    pub fn zone_transition(&self, zone: Zone, t: ActionType) -> Vec<(Zone, f64)> {
        let mut out: Vec<(Zone, f64)> = Vec::new();
        for m in &self.moves[t.index()] {
            let z = Zone::new(zone.zx as i32 + m.dx as i32, zone.zy as i32 + m.dy as i32);
            match out.iter_mut().find(|(q, _)| *q == z) {
                Some((_, p)) => *p += m.p,
                None => out.push((z, m.p)),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        for (third, dist) in self.action_dist.iter().enumerate() {
            if dist.len() != N_TYPES || dist.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(format!("{}: bad action_dist for third {third}", self.name));
            }
            let s: f64 = dist.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(format!("{}: action_dist for third {third} sums to {s}", self.name));
            }
        }
        if self.success_rate.len() != N_TYPES || self.success_rate.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(format!("{}: bad success_rate", self.name));
        }
        if self.moves.len() != N_TYPES {
            return Err(format!("{}: moves table has wrong length", self.name));
        }
        for (i, ms) in self.moves.iter().enumerate() {
            let s: f64 = ms.iter().map(|m| m.p).sum();
            if !ms.is_empty() && (s - 1.0).abs() > 1e-9 {
                return Err(format!("{}: moves for type {i} sum to {s}", self.name));
            }
        }
        Ok(())
    }

    /// Expected action-type distribution given how often the player acted
    /// in each third.
    pub fn expected_action_dist(&self, third_counts: [f64; THIRDS]) -> Vec<f64> {
        let total: f64 = third_counts.iter().sum();
        let mut out = vec![0.0; N_TYPES];
        if total <= 0.0 {
            return out;
        }
        for (third, &c) in third_counts.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(&self.action_dist[third]) {
                *o += c / total * p;
            }
        }
        out
    }
}

fn dist(entries: &[(ActionType, f64)]) -> Vec<f64> {
    let mut d = vec![0.0; N_TYPES];
    for &(t, p) in entries {
        d[t.index()] += p;
    }
    d
}

fn spread(dx: &[(i8, f64)]) -> Vec<Move> {
    const DY: [(i8, f64); 3] = [(-1, 0.25), (0, 0.5), (1, 0.25)];
    dx.iter()
        .flat_map(|&(dx, px)| DY.iter().map(move |&(dy, py)| Move { dx, dy, p: px * py }))
        .collect()
}

fn shifted(dx: &[(i8, f64)], shift: i8) -> Vec<(i8, f64)> {
    dx.iter().map(|&(d, p)| (d + shift, p)).collect()
}

/// Displacement tables; `progression` shifts the forward component of
/// ball-carrying and passing moves.
fn move_table(progression: i8) -> Vec<Vec<Move>> {
    use ActionType::*;
    let mut moves = vec![Vec::new(); N_TYPES];
    let pass = [(-1, 0.2), (0, 0.3), (1, 0.35), (2, 0.15)];
    let carry = [(0, 0.4), (1, 0.6)];
    let beat = [(1, 0.7), (2, 0.3)];
    moves[Pass.index()] = spread(&shifted(&pass, progression));
    moves[Dribble.index()] = spread(&shifted(&carry, progression));
    moves[TakeOn.index()] = spread(&shifted(&beat, progression));
    moves[Cross.index()] = vec![Move { dx: 0, dy: 0, p: 1.0 }];
    moves[Clearance.index()] = spread(&[(2, 0.3), (3, 0.4), (4, 0.3)]);
    moves[Goalkick.index()] = spread(&[(4, 0.5), (5, 0.5)]);
    for t in [Tackle, Interception, KeeperSave, KeeperPickUp, KeeperClaim, KeeperPunch] {
        moves[t.index()] = spread(&[(0, 0.6), (1, 0.4)]);
    }
    for t in [ThrowIn, FreekickShort, FreekickCrossed, CornerShort, CornerCrossed, Foul, BadTouch] {
        moves[t.index()] = vec![Move { dx: 0, dy: 0, p: 1.0 }];
    }
    // Shots end in a goal or a restart, never in a zone.
    moves
}

fn success_rates(overrides: &[(ActionType, f64)]) -> Vec<f64> {
    use ActionType::*;
    let mut s = vec![0.5; N_TYPES];
    for (t, p) in [
        (Pass, 0.85),
        (Cross, 0.35),
        (Dribble, 0.8),
        (TakeOn, 0.55),
        (Shot, 0.1),
        (Tackle, 0.65),
        (Interception, 0.8),
        (Clearance, 0.6),
        (BadTouch, 0.0),
        (KeeperPickUp, 0.95),
        (KeeperSave, 0.7),
        (Goalkick, 0.5),
    ] {
        s[t.index()] = p;
    }
    for &(t, p) in overrides {
        s[t.index()] = p;
    }
    s
}

fn archetype(
    name: &str,
    role_class: RoleClass,
    action_dist: [Vec<f64>; THIRDS],
    success_rate: Vec<f64>,
    moves: Vec<Vec<Move>>,
) -> Archetype {
    Archetype { name: name.to_string(), role_class, action_dist, success_rate, moves }
}

/// The six archetypes of the default league.
pub fn default_archetypes() -> Vec<Archetype> {
    use ActionType::*;
    vec![
        archetype(
            "keeper",
            RoleClass::Keeper,
            [
                dist(&[(KeeperPickUp, 0.3), (Pass, 0.4), (Goalkick, 0.15), (KeeperSave, 0.15)]),
                dist(&[(Pass, 0.8), (Clearance, 0.2)]),
                dist(&[(Pass, 0.7), (Shot, 0.3)]),
            ],
            success_rates(&[]),
            move_table(0),
        ),
        archetype(
            "stopper-defender",
            RoleClass::Defender,
            [
                dist(&[(Clearance, 0.35), (Tackle, 0.25), (Interception, 0.2), (Pass, 0.2)]),
                dist(&[(Tackle, 0.3), (Interception, 0.3), (Pass, 0.3), (Clearance, 0.1)]),
                dist(&[(Pass, 0.5), (Shot, 0.15), (Tackle, 0.2), (Clearance, 0.15)]),
            ],
            success_rates(&[(Tackle, 0.75), (Pass, 0.8)]),
            move_table(0),
        ),
        archetype(
            "passer-defender",
            RoleClass::Defender,
            [
                dist(&[(Pass, 0.65), (Clearance, 0.1), (Interception, 0.1), (Tackle, 0.1), (Dribble, 0.05)]),
                dist(&[(Pass, 0.7), (Dribble, 0.1), (Interception, 0.1), (Tackle, 0.1)]),
                dist(&[(Pass, 0.6), (Cross, 0.2), (Dribble, 0.1), (Shot, 0.1)]),
            ],
            success_rates(&[(Pass, 0.92), (Shot, 0.05)]),
            move_table(-1),
        ),
        archetype(
            "playmaker-midfielder",
            RoleClass::Midfielder,
            [
                dist(&[(Pass, 0.7), (Dribble, 0.1), (Interception, 0.1), (Tackle, 0.1)]),
                dist(&[(Pass, 0.65), (Cross, 0.05), (Dribble, 0.1), (TakeOn, 0.05), (Interception, 0.1), (Tackle, 0.05)]),
                dist(&[(Pass, 0.55), (Cross, 0.15), (Shot, 0.1), (Dribble, 0.1), (TakeOn, 0.1)]),
            ],
            success_rates(&[(Pass, 0.9)]),
            move_table(0),
        ),
        archetype(
            "dribbler-forward",
            RoleClass::Attacker,
            [
                dist(&[(Pass, 0.45), (Dribble, 0.3), (TakeOn, 0.1), (Clearance, 0.05), (BadTouch, 0.05), (Interception, 0.05)]),
                dist(&[(Pass, 0.35), (Dribble, 0.35), (TakeOn, 0.15), (Cross, 0.05), (BadTouch, 0.05), (Tackle, 0.05)]),
                dist(&[(Pass, 0.2), (Dribble, 0.35), (TakeOn, 0.2), (Shot, 0.15), (Cross, 0.05), (BadTouch, 0.05)]),
            ],
            success_rates(&[(Dribble, 0.85), (TakeOn, 0.65), (Shot, 0.2)]),
            move_table(1),
        ),
        archetype(
            "poacher-forward",
            RoleClass::Attacker,
            [
                dist(&[(Pass, 0.6), (Dribble, 0.1), (Clearance, 0.1), (BadTouch, 0.1), (Interception, 0.1)]),
                dist(&[(Pass, 0.55), (Dribble, 0.15), (BadTouch, 0.1), (Tackle, 0.1), (TakeOn, 0.1)]),
                dist(&[(Shot, 0.35), (Pass, 0.35), (Dribble, 0.1), (BadTouch, 0.1), (TakeOn, 0.1)]),
            ],
            success_rates(&[(Shot, 0.3)]),
            move_table(0),
        ),
    ]
}
