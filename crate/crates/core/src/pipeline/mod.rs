//! Hierarchical decision making: propose candidates, ground a subgoal, sample
//! a guided observation plan, read actions off consecutive plan frames and
//! execute them, then observe again.

mod episode;
mod eval;
mod likelihood;

pub use episode::{choose_subgoal, plan_and_execute, EpisodeResult, Models, PipelineConfig, PlannerMode};
pub use eval::{
    episode_seed, eval_task_seed, eval_tasks, evaluate, evaluate_episodes, report_csv, sweep_csv, sweep_guidance, EvalReport,
    SweepRow, DEFAULT_SWEEP,
};
pub use likelihood::{action_term, joint_log_likelihood, task_term, JointTerms};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("incompatible models: {0}")]
    ModelIncompatible(String),
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Task(#[from] crate::task::TaskError),
    #[error(transparent)]
    Visual(#[from] crate::visual::VisualError),
    #[error(transparent)]
    Action(#[from] crate::action::ActionError),
}
