use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EntityColor, GoalSpec, SubgoalSpec};

/// Candidates per grounding decision.
pub const M: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<SubgoalSpec>,
    pub goal: GoalSpec,
}

impl CandidateSet {
    pub fn new(candidates: Vec<SubgoalSpec>, goal: GoalSpec) -> Result<Self, super::TaskError> {
        if candidates.len() != M {
            return Err(super::TaskError::BadCandidates(format!(
                "expected {M} candidates, got {}",
                candidates.len()
            )));
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(super::TaskError::BadCandidates(format!("duplicate candidate {c}")));
            }
        }
        Ok(Self { candidates, goal })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Paint and pack for every goal color, in shuffled order. Goals with
/// repeated colors are padded with paint/pack subgoals for colors outside the
/// goal, so the set always has `M` entries.
pub fn propose_candidates<R: Rng + ?Sized>(goal: &GoalSpec, rng: &mut R) -> CandidateSet {
    let colors = goal.distinct();
    let mut cands: Vec<SubgoalSpec> = colors
        .iter()
        .flat_map(|&c| [SubgoalSpec::paint(c), SubgoalSpec::pack(c)])
        .collect();
    if cands.len() < M {
        let mut pool: Vec<SubgoalSpec> = EntityColor::GOAL_PALETTE
            .iter()
            .filter(|c| !colors.contains(c))
            .flat_map(|&c| {
                let pack = SubgoalSpec::pack(c);
                if c.is_paintable() {
                    vec![SubgoalSpec::paint(c), pack]
                } else {
                    vec![pack]
                }
            })
            .collect();
        pool.shuffle(rng);
        cands.extend(pool.into_iter().take(M - cands.len()));
    }
    cands.shuffle(rng);
    CandidateSet {
        candidates: cands,
        goal: *goal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;
    use EntityColor::*;

    #[test]
    fn three_color_goal_enumerates_paint_and_pack() {
        let goal = GoalSpec::new([Red, Green, Blue]).unwrap();
        let c = propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(0));
        let got: BTreeSet<_> = c.candidates.iter().copied().collect();
        let want: BTreeSet<_> = [Red, Green, Blue]
            .into_iter()
            .flat_map(|c| [SubgoalSpec::paint(c), SubgoalSpec::pack(c)])
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn same_seed_same_order() {
        let goal = GoalSpec::new([Red, Pink, Blue]).unwrap();
        let a = propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(9));
        let b = propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn constructor_rejects_duplicates_and_wrong_size() {
        let goal = GoalSpec::new([Red, Red, Red]).unwrap();
        assert!(CandidateSet::new(vec![SubgoalSpec::paint(Red); 6], goal).is_err());
        assert!(CandidateSet::new(vec![SubgoalSpec::paint(Red)], goal).is_err());
    }

    proptest! {
        #[test]
        fn always_m_distinct_covering_goal(a in 0usize..5, b in 0usize..5, c in 0usize..5, seed: u64) {
            let p = EntityColor::GOAL_PALETTE;
            let goal = GoalSpec::new([p[a], p[b], p[c]]).unwrap();
            let set = propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(CandidateSet::new(set.candidates.clone(), goal).is_ok());
            for col in goal.distinct() {
                prop_assert!(set.candidates.contains(&SubgoalSpec::pack(col)));
                if col.is_paintable() {
                    prop_assert!(set.candidates.contains(&SubgoalSpec::paint(col)));
                }
            }
        }
    }
}
