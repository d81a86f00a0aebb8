//! Deterministic paint-block world: three blocks, four paint bowls and a box.
//! A goal names three colors; it is met when a block of each is in the box.

mod dataset;
mod types;
mod world;

pub use dataset::{generate_datasets, task_seed as dataset_task_seed, ClassifyRecord, Datasets, InvRecord, VideoRecord};
pub use types::*;
pub use world::{
    expert_rollout, goal_satisfied, goal_unreachable, observe, remaining_work, reset, step,
    valid_next_subgoals, Task,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("goal unreachable: {0}")]
    GoalUnreachable(String),
    #[error("subgoal infeasible: {0}")]
    SubgoalInfeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("n_tasks must be at least 1")]
    NoTasks,
}
