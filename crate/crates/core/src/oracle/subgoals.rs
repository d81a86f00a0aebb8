use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{expert_rollout, EntityColor, EnvParams, GoalSpec, SubgoalSpec, Task, WorldState};

/// Paints plus packs still missing, counted directly from the blocks.
fn work_left(state: &WorldState, goal: &GoalSpec) -> usize {
    let mut left = 0;
    for c in EntityColor::ALL {
        let want = goal.targets().iter().filter(|&&t| t == c).count();
        let have = state.blocks.iter().filter(|b| b.color == c).count();
        let packed = state.blocks.iter().filter(|b| b.color == c && b.in_box).count();
        left += want.saturating_sub(have) + want.saturating_sub(packed);
    }
    left
}

/// Whether the remaining paints can still be covered by white blocks outside
/// the box.
fn still_reachable(state: &WorldState, goal: &GoalSpec) -> bool {
    let whites = state
        .blocks
        .iter()
        .filter(|b| b.color == EntityColor::White && !b.in_box)
        .count();
    let mut needed = 0;
    for c in EntityColor::ALL {
        let want = goal.targets().iter().filter(|&&t| t == c).count();
        let have = state.blocks.iter().filter(|b| b.color == c).count();
        let short = want.saturating_sub(have);
        if short > 0 && !EntityColor::BOWLS.contains(&c) {
            return false;
        }
        needed += short;
    }
    needed <= whites
}

/// Simulates every subgoal in the grammar with the scripted expert and keeps
/// those whose outcome strictly reduces the outstanding work.
pub fn bruteforce_next_subgoals(state: &WorldState, goal: &GoalSpec) -> BTreeSet<SubgoalSpec> {
    let before = work_left(state, goal);
    SubgoalSpec::grammar()
        .into_iter()
        .filter(|w| match expert_rollout(state, w) {
            Ok((_, next)) => work_left(&next, goal) < before,
            Err(_) => false,
        })
        .collect()
}

/// States reached from fresh tasks by up to six random grammar subgoals that
/// the expert can execute and that keep the goal reachable.
pub fn random_reachable_states(n: usize, seed: u64, params: EnvParams) -> Vec<(WorldState, GoalSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grammar = SubgoalSpec::grammar();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let task = Task::sample(rng.random(), params).expect("sampled tasks are valid");
        let mut state = task.initial.clone();
        let depth = rng.random_range(0..=6);
        for _ in 0..depth {
            let options: Vec<WorldState> = grammar
                .iter()
                .filter_map(|w| expert_rollout(&state, w).ok())
                .map(|(_, next)| next)
                .filter(|next| still_reachable(next, &task.goal))
                .collect();
            match options.choose(&mut rng) {
                Some(next) => state = next.clone(),
                None => break,
            }
        }
        out.push((state, task.goal));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{valid_next_subgoals, Block, BOX_CENTER};
    use EntityColor::*;

    fn whites() -> WorldState {
        let blocks = [[0.3, 0.5], [0.7, 0.4], [0.5, 0.75]]
            .into_iter()
            .map(|pos| Block { pos, color: White, in_box: false })
            .collect();
        WorldState::new([0.5, 0.3], blocks, EnvParams::default()).unwrap()
    }

    #[test]
    fn three_whites_give_three_paints() {
        let goal = GoalSpec::new([Red, Green, Blue]).unwrap();
        let want: BTreeSet<_> = [Red, Green, Blue].into_iter().map(SubgoalSpec::paint).collect();
        assert_eq!(bruteforce_next_subgoals(&whites(), &goal), want);
    }

    #[test]
    fn completed_goal_gives_nothing() {
        let mut s = whites();
        for (b, c) in s.blocks.iter_mut().zip([Red, Green, Blue]) {
            b.color = c;
            b.pos = BOX_CENTER;
            b.in_box = true;
        }
        assert!(bruteforce_next_subgoals(&s, &GoalSpec::new([Red, Green, Blue]).unwrap()).is_empty());
    }

    #[test]
    fn mixed_state_matches_rule() {
        let mut s = whites();
        s.blocks[2].color = Red;
        let goal = GoalSpec::new([Red, Green, Blue]).unwrap();
        let got = bruteforce_next_subgoals(&s, &goal);
        assert_eq!(got, valid_next_subgoals(&s, &goal).unwrap());
        assert!(got.contains(&SubgoalSpec::pack(Red)));
    }

    #[test]
    fn agrees_with_rule_on_random_states() {
        for (s, g) in random_reachable_states(150, 5, EnvParams::default()) {
            assert_eq!(bruteforce_next_subgoals(&s, &g), valid_next_subgoals(&s, &g).unwrap());
        }
    }

    #[test]
    fn every_valid_subgoal_reduces_work_by_one() {
        for (s, g) in random_reachable_states(100, 8, EnvParams::default()) {
            let before = work_left(&s, &g);
            for w in valid_next_subgoals(&s, &g).unwrap() {
                let (_, next) = expert_rollout(&s, &w).unwrap();
                assert_eq!(work_left(&next, &g) + 1, before);
            }
        }
    }
}
