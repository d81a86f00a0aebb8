//! Visual planning: a DDPM over observation trajectories conditioned on the
//! current observation and a subgoal, steered by classifier-free guidance and
//! by the input gradient of a trajectory feasibility classifier.

pub mod denoiser;
pub mod feasibility;
pub mod rank;
pub mod sampler;
pub mod schedule;

pub use denoiser::{
    denoising_loss, flatten, train_denoiser, traj_dim, unflatten, Conditioning, DenoiserNet, DenoiserTrainConfig,
    Parameterization, DENOISER_ROLE,
};
pub use feasibility::{
    feasibility_accuracy, frame_differences, make_negatives, train_feasibility, FeasibilityClassifier, FeasibilityTrainConfig,
    FEASIBILITY_ROLE,
};
pub use rank::{action_log_likelihood, rank_by_action_likelihood};
pub use sampler::{ancestral_sample, combine_guidance, guided_noise, sample_plan, sample_plan_flat, GuidanceConfig};
pub use schedule::{NoiseSchedule, ScheduleParams};

#[derive(Debug, thiserror::Error)]
pub enum VisualError {
    #[error("invalid schedule parameters: {0}")]
    InvalidScheduleParams(String),
    #[error("diffusion step {k} outside 1..={max}")]
    InvalidStep { k: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty plan set")]
    EmptyPlanSet,
    #[error("trajectory of length {0} is too short for negative construction")]
    TooShort(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}
