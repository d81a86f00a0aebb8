use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const NUM_BLOCKS: usize = 3;
pub const NUM_COLORS: usize = 7;
/// `[gripper(2), holding(1)]` then per block `pos(2) + color one-hot(7) + in_box(1)`.
pub const OBS_DIM: usize = 3 + 10 * NUM_BLOCKS;
pub const ACTION_DIM: usize = 3;
pub const SUBGOAL_DIM: usize = 2 + 2 * NUM_COLORS;
pub const GOAL_DIM: usize = NUM_COLORS;
pub const MAX_DELTA: f64 = 0.2;
pub const GRIP_THRESHOLD: f64 = 0.5;

pub type Vec2 = [f64; 2];

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityColor {
    White,
    Red,
    Green,
    Blue,
    Yellow,
    Pink,
    Brown,
}

impl EntityColor {
    pub const ALL: [EntityColor; NUM_COLORS] = [
        EntityColor::White,
        EntityColor::Red,
        EntityColor::Green,
        EntityColor::Blue,
        EntityColor::Yellow,
        EntityColor::Pink,
        EntityColor::Brown,
    ];
    /// Colors that have a paint bowl.
    pub const BOWLS: [EntityColor; 4] = [
        EntityColor::Red,
        EntityColor::Green,
        EntityColor::Blue,
        EntityColor::Yellow,
    ];
    /// Colors a goal may ask for.
    pub const GOAL_PALETTE: [EntityColor; 5] = [
        EntityColor::Red,
        EntityColor::Green,
        EntityColor::Blue,
        EntityColor::Yellow,
        EntityColor::Pink,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityColor::White => "white",
            EntityColor::Red => "red",
            EntityColor::Green => "green",
            EntityColor::Blue => "blue",
            EntityColor::Yellow => "yellow",
            EntityColor::Pink => "pink",
            EntityColor::Brown => "brown",
        }
    }

    pub fn is_paintable(self) -> bool {
        Self::BOWLS.contains(&self)
    }

    pub fn one_hot(self) -> [f64; NUM_COLORS] {
        let mut v = [0.0; NUM_COLORS];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for EntityColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityColor {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| EnvError::Parse(format!("unknown color {s:?}")))
    }
}

/// Geometry knobs of the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    /// Observations per segment (T).
    pub horizon: usize,
    pub pick_radius: f64,
    pub bowl_radius: f64,
    pub box_radius: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            horizon: 12,
            pick_radius: 0.08,
            bowl_radius: 0.1,
            box_radius: 0.12,
        }
    }
}

impl EnvParams {
    /// Actions the scripted expert needs: four approach steps and four carry steps.
    pub const EXPERT_ACTIONS: usize = 8;

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon < Self::EXPERT_ACTIONS + 1 {
            return Err(EnvError::InvalidParams(format!(
                "horizon must be at least {}, got {}",
                Self::EXPERT_ACTIONS + 1,
                self.horizon
            )));
        }
        let ok = self.pick_radius > 0.0
            && self.pick_radius < self.bowl_radius
            && self.bowl_radius < self.box_radius
            && self.box_radius < 0.2;
        if !ok {
            return Err(EnvError::InvalidParams(format!(
                "radii must satisfy 0 < pick < bowl < box < 0.2, got {} / {} / {}",
                self.pick_radius, self.bowl_radius, self.box_radius
            )));
        }
        Ok(())
    }

    /// Minimum spacing between initial blocks and fixed landmarks.
    pub fn min_separation(&self) -> f64 {
        (self.box_radius + self.pick_radius).max(0.15)
    }

    pub fn actions_per_segment(&self) -> usize {
        self.horizon - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub pos: Vec2,
    pub color: EntityColor,
    pub in_box: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bowl {
    pub center: Vec2,
    pub color: EntityColor,
}

/// Bowl layout shared by every task; the observation does not encode it.
pub const BOWL_LAYOUT: [Bowl; 4] = [
    Bowl { center: [0.15, 0.85], color: EntityColor::Red },
    Bowl { center: [0.85, 0.85], color: EntityColor::Green },
    Bowl { center: [0.85, 0.15], color: EntityColor::Blue },
    Bowl { center: [0.15, 0.15], color: EntityColor::Yellow },
];
pub const BOX_CENTER: Vec2 = [0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub gripper_pos: Vec2,
    pub holding: Option<usize>,
    pub blocks: Vec<Block>,
    pub bowls: Vec<Bowl>,
    pub box_center: Vec2,
    pub step_count: u64,
    pub params: EnvParams,
}

impl WorldState {
    pub fn new(gripper_pos: Vec2, blocks: Vec<Block>, params: EnvParams) -> Result<Self, EnvError> {
        if blocks.len() != NUM_BLOCKS {
            return Err(EnvError::InvalidState(format!(
                "expected {NUM_BLOCKS} blocks, got {}",
                blocks.len()
            )));
        }
        let s = Self {
            gripper_pos,
            holding: None,
            blocks,
            bowls: BOWL_LAYOUT.to_vec(),
            box_center: BOX_CENTER,
            step_count: 0,
            params,
        };
        s.check_invariants()?;
        Ok(s)
    }

    pub fn check_invariants(&self) -> Result<(), EnvError> {
        let in_unit = |p: Vec2| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        if !in_unit(self.gripper_pos) {
            return Err(EnvError::InvalidState("gripper outside the unit square".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if !in_unit(b.pos) {
                return Err(EnvError::InvalidState(format!("block {i} outside the unit square")));
            }
            if b.in_box && dist(b.pos, self.box_center) >= self.params.box_radius {
                return Err(EnvError::InvalidState(format!("block {i} flagged in_box outside the box")));
            }
        }
        if let Some(h) = self.holding {
            if h >= self.blocks.len() || self.blocks[h].pos != self.gripper_pos {
                return Err(EnvError::InvalidState("held block does not track the gripper".into()));
            }
        }
        Ok(())
    }

    pub fn bowl_for(&self, color: EntityColor) -> Option<&Bowl> {
        self.bowls.iter().find(|b| b.color == color)
    }

    pub fn count_color(&self, color: EntityColor) -> usize {
        self.blocks.iter().filter(|b| b.color == color).count()
    }

    /// White blocks outside the box; packed ones may sit under other blocks.
    pub fn free_whites(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.color == EntityColor::White && !b.in_box)
            .count()
    }

    pub fn count_packed(&self, color: EntityColor) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.color == color && b.in_box)
            .count()
    }
}

/// Fixed-length encoding of a [`WorldState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn gripper(&self) -> Vec2 {
        [self.0[0], self.0[1]]
    }

    pub fn holding_flag(&self) -> f64 {
        self.0[2]
    }

    fn block_base(i: usize) -> usize {
        3 + 10 * i
    }

    pub fn block_pos(&self, i: usize) -> Vec2 {
        let b = Self::block_base(i);
        [self.0[b], self.0[b + 1]]
    }

    pub fn block_color_one_hot(&self, i: usize) -> &[f64] {
        let b = Self::block_base(i) + 2;
        &self.0[b..b + NUM_COLORS]
    }

    /// Color with the largest one-hot entry.
    pub fn block_color(&self, i: usize) -> EntityColor {
        let oh = self.block_color_one_hot(i);
        let mut best = 0;
        for (c, v) in oh.iter().enumerate() {
            if *v > oh[best] {
                best = c;
            }
        }
        EntityColor::from_index(best).expect("index < NUM_COLORS")
    }

    pub fn block_in_box(&self, i: usize) -> f64 {
        self.0[Self::block_base(i) + 9]
    }
}

/// `[dx, dy, grip_next]` with deltas clamped to `[-MAX_DELTA, MAX_DELTA]` and grip to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    pub fn new(dx: f64, dy: f64, grip: f64) -> Self {
        let fix = |v: f64| if v.is_finite() { v } else { 0.0 };
        Self([
            fix(dx).clamp(-MAX_DELTA, MAX_DELTA),
            fix(dy).clamp(-MAX_DELTA, MAX_DELTA),
            fix(grip).clamp(0.0, 1.0),
        ])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn null(grip_closed: bool) -> Self {
        Self::new(0.0, 0.0, if grip_closed { 1.0 } else { 0.0 })
    }

    pub fn delta(&self) -> Vec2 {
        [self.0[0], self.0[1]]
    }

    pub fn grip(&self) -> f64 {
        self.0[2]
    }

    pub fn grip_closed(&self) -> bool {
        self.0[2] >= GRIP_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Paint,
    Pack,
}

/// Symbolic one-step instruction: paint a white block, or pack a colored block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubgoalSpec {
    pub verb: Verb,
    pub block_color: EntityColor,
    pub target_color: EntityColor,
}

impl SubgoalSpec {
    pub fn new(verb: Verb, block_color: EntityColor, target_color: EntityColor) -> Result<Self, EnvError> {
        match verb {
            Verb::Paint if block_color != EntityColor::White => Err(EnvError::Parse(
                "paint subgoals must start from a white block".into(),
            )),
            Verb::Pack if target_color != EntityColor::Brown => Err(EnvError::Parse(
                "pack subgoals must target the brown box".into(),
            )),
            _ => Ok(Self {
                verb,
                block_color,
                target_color,
            }),
        }
    }

    pub fn paint(color: EntityColor) -> Self {
        Self {
            verb: Verb::Paint,
            block_color: EntityColor::White,
            target_color: color,
        }
    }

    pub fn pack(color: EntityColor) -> Self {
        Self {
            verb: Verb::Pack,
            block_color: color,
            target_color: EntityColor::Brown,
        }
    }

    /// Every well-formed subgoal over the palette.
    pub fn grammar() -> Vec<Self> {
        EntityColor::ALL
            .iter()
            .map(|&c| Self::paint(c))
            .chain(EntityColor::ALL.iter().map(|&c| Self::pack(c)))
            .collect()
    }

    /// `[verb one-hot(2), block color one-hot(7), target color one-hot(7)]`.
    pub fn encode(&self) -> [f64; SUBGOAL_DIM] {
        let mut v = [0.0; SUBGOAL_DIM];
        v[match self.verb {
            Verb::Paint => 0,
            Verb::Pack => 1,
        }] = 1.0;
        v[2 + self.block_color.index()] = 1.0;
        v[2 + NUM_COLORS + self.target_color.index()] = 1.0;
        v
    }
}

impl fmt::Display for SubgoalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.verb {
            Verb::Paint => write!(f, "paint {} block {}", self.block_color, self.target_color),
            Verb::Pack => write!(f, "pack {} block in {} box", self.block_color, self.target_color),
        }
    }
}

impl FromStr for SubgoalSpec {
    type Err = EnvError;

    /// Accepts `paint <white> block <color>` and `pack <color> block in <brown> box`,
    /// case-insensitively, with optional list markers and trailing period.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cleaned = s
            .trim()
            .trim_start_matches(|c: char| c == '-' || c == '*' || c.is_ascii_digit() || c == '.' || c == ')')
            .trim()
            .trim_end_matches('.')
            .to_ascii_lowercase();
        let words: Vec<&str> = cleaned.split_whitespace().collect();
        let bad = || EnvError::Parse(format!("cannot parse subgoal {s:?}"));
        match words.as_slice() {
            ["paint", block, "block", target] => {
                Self::new(Verb::Paint, block.parse()?, target.parse()?)
            }
            ["pack", block, "block", "in", target, "box"] => {
                Self::new(Verb::Pack, block.parse()?, target.parse()?)
            }
            _ => Err(bad()),
        }
    }
}

/// Multiset of three target colors; every block must end up packed with its color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoalSpec {
    targets: [EntityColor; NUM_BLOCKS],
}

impl GoalSpec {
    pub fn new(mut targets: [EntityColor; NUM_BLOCKS]) -> Result<Self, EnvError> {
        if let Some(c) = targets.iter().find(|c| !EntityColor::GOAL_PALETTE.contains(c)) {
            return Err(EnvError::InvalidState(format!("{c} is not a goal color")));
        }
        targets.sort();
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[EntityColor; NUM_BLOCKS] {
        &self.targets
    }

    /// Distinct target colors in palette order.
    pub fn distinct(&self) -> Vec<EntityColor> {
        let mut v = self.targets.to_vec();
        v.dedup();
        v
    }

    pub fn count(&self, color: EntityColor) -> usize {
        self.targets.iter().filter(|&&c| c == color).count()
    }

    pub fn encode(&self) -> [f64; GOAL_DIM] {
        let mut v = [0.0; GOAL_DIM];
        for c in &self.targets {
            v[c.index()] += 1.0;
        }
        v
    }
}

impl fmt::Display for GoalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.targets;
        write!(f, "put a {a} block, a {b} block and a {c} block in the brown box")
    }
}

/// Observation trajectory of one segment (T frames).
pub type ObsTrajectory = Vec<Observation>;
/// Action trajectory of one segment (T - 1 actions).
pub type ActionTrajectory = Vec<Action>;

/// One expert segment: observations, the actions connecting them, and the subgoal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub obs: ObsTrajectory,
    pub acts: ActionTrajectory,
    pub subgoal: SubgoalSpec,
}
