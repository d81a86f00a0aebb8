use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::*;
use super::world::{expert_rollout, goal_satisfied, observe, reset, valid_next_subgoals, Task};
use super::EnvError;
use crate::task::propose_candidates;

/// Grounding example: first frame of a segment, the goal, the proposed
/// candidates and which of them the expert executed. `valid` marks every
/// candidate that would also have advanced the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRecord {
    pub obs: Observation,
    pub goal: GoalSpec,
    pub candidates: Vec<SubgoalSpec>,
    pub label: usize,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub obs: ObsTrajectory,
    pub subgoal: SubgoalSpec,
    pub goal: GoalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvRecord {
    pub obs: ObsTrajectory,
    pub acts: ActionTrajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub classify: Vec<ClassifyRecord>,
    pub video: Vec<VideoRecord>,
    pub inv: Vec<InvRecord>,
}

/// Seed of the `i`-th training task.
pub fn task_seed(master_seed: u64, i: u64) -> u64 {
    master_seed ^ i
}

/// Samples `n_tasks` tasks and runs the expert on each until the goal holds,
/// choosing uniformly among the currently valid subgoals.
pub fn generate_datasets(n_tasks: usize, master_seed: u64, params: EnvParams) -> Result<Datasets, EnvError> {
    if n_tasks == 0 {
        return Err(EnvError::NoTasks);
    }
    let mut out = Datasets::default();
    for i in 0..n_tasks as u64 {
        let seed = task_seed(master_seed, i);
        let task = Task::sample(seed, params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut state = reset(&task);
        let mut segments = 0;
        while !goal_satisfied(&state, &task.goal) {
            let valid = valid_next_subgoals(&state, &task.goal)?;
            let options: Vec<SubgoalSpec> = valid.iter().copied().collect();
            let chosen = *options.choose(&mut rng).ok_or_else(|| {
                EnvError::GoalUnreachable("no valid subgoal for an incomplete goal".into())
            })?;
            let cands = propose_candidates(&task.goal, &mut rng);
            let label = cands
                .candidates
                .iter()
                .position(|c| *c == chosen)
                .expect("proposer covers every goal subgoal");
            let (pair, next) = expert_rollout(&state, &chosen)?;
            out.classify.push(ClassifyRecord {
                obs: observe(&state),
                goal: task.goal,
                valid: cands.candidates.iter().map(|c| valid.contains(c)).collect(),
                candidates: cands.candidates,
                label,
            });
            out.video.push(VideoRecord {
                obs: pair.obs.clone(),
                subgoal: chosen,
                goal: task.goal,
            });
            out.inv.push(InvRecord {
                obs: pair.obs,
                acts: pair.acts,
            });
            state = next;
            segments += 1;
            if segments > 2 * NUM_BLOCKS {
                return Err(EnvError::GoalUnreachable(format!(
                    "task {seed} needs more than {} segments",
                    2 * NUM_BLOCKS
                )));
            }
        }
    }
    Ok(out)
}
