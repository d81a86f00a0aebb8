use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::*;
use super::EnvError;

/// Blocks and the gripper spawn inside this square, so every expert leg is
/// at most 0.7 per axis and fits in four clamped moves.
const SPAWN_LO: f64 = 0.15;
const SPAWN_HI: f64 = 0.85;

/// A goal paired with a solvable initial world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub goal: GoalSpec,
    pub initial: WorldState,
    pub seed: u64,
}

impl Task {
    pub fn new(goal: GoalSpec, initial: WorldState, seed: u64) -> Result<Self, EnvError> {
        initial.check_invariants()?;
        initial.params.validate()?;
        valid_next_subgoals(&initial, &goal)?;
        Ok(Self { goal, initial, seed })
    }

    /// Random task: three goal colors, one block per target either white or
    /// already carrying the target color (pink is never paintable, so it is
    /// always pre-colored), placed away from the bowls, the box and each other.
    pub fn sample(seed: u64, params: EnvParams) -> Result<Self, EnvError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut targets = [EntityColor::Red; NUM_BLOCKS];
        for t in targets.iter_mut() {
            *t = *EntityColor::GOAL_PALETTE.choose(&mut rng).expect("non-empty");
        }
        let goal = GoalSpec::new(targets)?;
        let mut colors: Vec<EntityColor> = targets
            .iter()
            .map(|&c| {
                if !c.is_paintable() || rng.random_bool(0.25) {
                    c
                } else {
                    EntityColor::White
                }
            })
            .collect();
        colors.shuffle(&mut rng);

        let sep = params.min_separation();
        let mut landmarks: Vec<Vec2> = BOWL_LAYOUT.iter().map(|b| b.center).collect();
        landmarks.push(BOX_CENTER);
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        for color in colors {
            let pos = loop {
                let p = [rng.random_range(SPAWN_LO..SPAWN_HI), rng.random_range(SPAWN_LO..SPAWN_HI)];
                if landmarks.iter().all(|&q| dist(p, q) >= sep) {
                    break p;
                }
            };
            landmarks.push(pos);
            blocks.push(Block { pos, color, in_box: false });
        }
        let gripper = [rng.random_range(SPAWN_LO..SPAWN_HI), rng.random_range(SPAWN_LO..SPAWN_HI)];
        let initial = WorldState::new(gripper, blocks, params)?;
        Self::new(goal, initial, seed)
    }
}

pub fn reset(task: &Task) -> WorldState {
    let mut s = task.initial.clone();
    s.step_count = 0;
    s
}

/// Applies one action: move (clamped to the unit square), then pick on a
/// closing grip or drop on an opening grip. Dropping a white block inside a
/// bowl paints it; dropping inside the box packs it.
pub fn step(state: &WorldState, action: &Action) -> WorldState {
    let mut s = state.clone();
    let p = &s.params;
    let [dx, dy] = action.delta();
    s.gripper_pos = [
        (s.gripper_pos[0] + dx).clamp(0.0, 1.0),
        (s.gripper_pos[1] + dy).clamp(0.0, 1.0),
    ];
    if let Some(h) = s.holding {
        s.blocks[h].pos = s.gripper_pos;
    }
    match (s.holding, action.grip_closed()) {
        (None, true) => {
            let mut best: Option<(usize, f64)> = None;
            for (i, b) in s.blocks.iter().enumerate() {
                let d = dist(b.pos, s.gripper_pos);
                if d < p.pick_radius && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                s.holding = Some(i);
                let b = &mut s.blocks[i];
                b.pos = s.gripper_pos;
                b.in_box = false;
            }
        }
        (Some(h), false) => {
            s.holding = None;
            let pos = s.gripper_pos;
            let bowl_color = s
                .bowls
                .iter()
                .map(|bw| (dist(bw.center, pos), bw.color))
                .filter(|(d, _)| *d < p.bowl_radius)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, c)| c);
            let in_box = dist(s.box_center, pos) < p.box_radius;
            let b = &mut s.blocks[h];
            if b.color == EntityColor::White {
                if let Some(c) = bowl_color {
                    b.color = c;
                }
            }
            b.in_box = in_box;
        }
        _ => {}
    }
    s.step_count += 1;
    s
}

pub fn observe(state: &WorldState) -> Observation {
    let mut v = Vec::with_capacity(OBS_DIM);
    v.extend_from_slice(&state.gripper_pos);
    v.push(if state.holding.is_some() { 1.0 } else { 0.0 });
    for b in &state.blocks {
        v.extend_from_slice(&b.pos);
        v.extend_from_slice(&b.color.one_hot());
        v.push(if b.in_box { 1.0 } else { 0.0 });
    }
    Observation(v)
}

/// Outstanding paints per target color, or `GoalUnreachable` when the free
/// white blocks cannot cover them.
fn paint_needs(state: &WorldState, goal: &GoalSpec) -> Result<Vec<(EntityColor, usize)>, EnvError> {
    let whites = state.free_whites();
    let mut needs = Vec::new();
    let mut total = 0;
    for c in goal.distinct() {
        let need = goal.count(c).saturating_sub(state.count_color(c));
        if need > 0 && !c.is_paintable() {
            return Err(EnvError::GoalUnreachable(format!("no way to obtain a {c} block")));
        }
        total += need;
        needs.push((c, need));
    }
    if total > whites {
        return Err(EnvError::GoalUnreachable(format!(
            "{total} blocks still need paint but only {whites} are white"
        )));
    }
    Ok(needs)
}

/// Every subgoal that advances `goal` from `state`: paint a free white block for each
/// color still short, pack each target-colored block not yet in the box.
/// Empty iff the goal is complete.
pub fn valid_next_subgoals(state: &WorldState, goal: &GoalSpec) -> Result<BTreeSet<SubgoalSpec>, EnvError> {
    let needs = paint_needs(state, goal)?;
    let mut out = BTreeSet::new();
    for (c, need) in needs {
        if need > 0 {
            out.insert(SubgoalSpec::paint(c));
        }
        let packed = state.count_packed(c);
        if packed < goal.count(c) && state.count_color(c) > packed {
            out.insert(SubgoalSpec::pack(c));
        }
    }
    Ok(out)
}

/// Remaining paints plus remaining packs.
pub fn remaining_work(state: &WorldState, goal: &GoalSpec) -> usize {
    goal.distinct()
        .iter()
        .map(|&c| {
            let t = goal.count(c);
            t.saturating_sub(state.count_color(c)) + t.saturating_sub(state.count_packed(c))
        })
        .sum()
}

pub fn goal_satisfied(state: &WorldState, goal: &GoalSpec) -> bool {
    goal.distinct()
        .iter()
        .all(|&c| state.count_packed(c) >= goal.count(c))
}

/// True when no sequence of subgoals can reach the goal any more.
pub fn goal_unreachable(state: &WorldState, goal: &GoalSpec) -> bool {
    paint_needs(state, goal).is_err()
}

/// Block the expert manipulates for `subgoal`, and where it takes it.
fn expert_plan(state: &WorldState, subgoal: &SubgoalSpec) -> Result<(usize, Vec2), EnvError> {
    let infeasible = |why: String| EnvError::SubgoalInfeasible(format!("{subgoal}: {why}"));
    let (src, dest) = match subgoal.verb {
        Verb::Paint => {
            let src = state
                .blocks
                .iter()
                .position(|b| b.color == EntityColor::White && !b.in_box)
                .ok_or_else(|| infeasible("no free white block".into()))?;
            let bowl = state
                .bowl_for(subgoal.target_color)
                .ok_or_else(|| infeasible("no bowl of that color".into()))?;
            (src, bowl.center)
        }
        Verb::Pack => {
            let src = state
                .blocks
                .iter()
                .position(|b| b.color == subgoal.block_color && !b.in_box)
                .ok_or_else(|| infeasible("no such block outside the box".into()))?;
            (src, state.box_center)
        }
    };
    if state.holding.is_some_and(|h| h != src) {
        return Err(infeasible("gripper holds another block".into()));
    }
    Ok((src, dest))
}

fn subgoal_reached(state: &WorldState, subgoal: &SubgoalSpec, src: usize) -> bool {
    let b = &state.blocks[src];
    state.holding.is_none()
        && match subgoal.verb {
            Verb::Paint => b.color == subgoal.target_color,
            Verb::Pack => b.in_box,
        }
}

/// Scripted waypoint controller: four equal moves onto the source block (the
/// last one closing the grip), four equal moves to the destination (the last
/// one opening it), then null actions until the segment has T frames.
pub fn expert_rollout(state: &WorldState, subgoal: &SubgoalSpec) -> Result<(TrajectoryPair, WorldState), EnvError> {
    let (src, dest) = expert_plan(state, subgoal)?;
    let t_actions = state.params.actions_per_segment();
    let already_held = state.holding == Some(src);
    let mut cur = state.clone();
    let mut obs = vec![observe(&cur)];
    let mut acts = Vec::with_capacity(t_actions);
    let push = |cur: &mut WorldState, obs: &mut Vec<Observation>, acts: &mut Vec<Action>, a: Action| {
        *cur = step(cur, &a);
        obs.push(observe(cur));
        acts.push(a);
    };
    const LEG: usize = EnvParams::EXPERT_ACTIONS / 2;
    let src_pos = state.blocks[src].pos;
    for j in 0..LEG {
        let left = (LEG - j) as f64;
        let g = cur.gripper_pos;
        let grip = already_held || j + 1 == LEG;
        let a = Action::new((src_pos[0] - g[0]) / left, (src_pos[1] - g[1]) / left, grip as u8 as f64);
        push(&mut cur, &mut obs, &mut acts, a);
    }
    for j in 0..LEG {
        let left = (LEG - j) as f64;
        let g = cur.gripper_pos;
        let grip = j + 1 < LEG;
        let a = Action::new((dest[0] - g[0]) / left, (dest[1] - g[1]) / left, grip as u8 as f64);
        push(&mut cur, &mut obs, &mut acts, a);
    }
    while acts.len() < t_actions {
        let last_grip = acts.last().is_some_and(Action::grip_closed);
        push(&mut cur, &mut obs, &mut acts, Action::null(last_grip));
    }
    if !subgoal_reached(&cur, subgoal, src) {
        return Err(EnvError::SubgoalInfeasible(format!(
            "{subgoal}: expert did not reach the subgoal"
        )));
    }
    Ok((
        TrajectoryPair {
            obs,
            acts,
            subgoal: *subgoal,
        },
        cur,
    ))
}
