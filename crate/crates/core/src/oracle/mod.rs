//! Independent reference implementations used to check the planners:
//! closed-form denoisers for Gaussian data, simulation-based subgoal
//! validity and a synthetic density-ratio problem with known answers.

mod density;
mod gaussian;
mod gradients;
mod subgoals;

pub use density::{
    density_ratio_oracle, evaluate_ratio_classifier, log_ratios, ratio_experiment, three_components, train_ratio_classifier, DensityRatioData,
    GaussianComponent, RatioReport,
};
pub use gaussian::{gaussian_optimal_eps, gaussian_sampling_check, random_gaussian_spec, GaussianSpec, SamplingReport};
pub use gradients::{check_feasibility_input_gradient, gradient_suite, GradientCase};
pub use subgoals::{bruteforce_next_subgoals, random_reachable_states};
