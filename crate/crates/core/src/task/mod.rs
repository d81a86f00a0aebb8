//! Task planning: candidate subgoal proposal, the grounding classifier that
//! picks the candidate consistent with the current observation, and a
//! diffusion-loss alternative selector.

mod candidates;
mod elbo;
mod grounding;
mod llm;

pub use candidates::{propose_candidates, CandidateSet, M};
pub use elbo::{elbo_select, surrogate_loss};
pub use grounding::{
    argmax, grounding_accuracy, grounding_input, select_subgoal, train_grounding, GroundingClassifier,
    GroundingTrainConfig, GROUNDING_INPUT_DIM, GROUNDING_ROLE,
};
pub use llm::{llm_propose, parse_reply, render_prompt, LlmClientConfig, LlmOutcome, DEFAULT_PROMPT};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("bad candidate set: {0}")]
    BadCandidates(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("at least one ELBO term is required")]
    InsufficientSamples,
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error("visual planner: {0}")]
    Visual(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

impl TaskError {
    fn from_visual(e: crate::visual::VisualError) -> Self {
        TaskError::Visual(e.to_string())
    }
}
