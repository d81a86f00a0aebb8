use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::episode::Models;
use super::PipelineError;
use crate::env::{Action, ObsTrajectory, Observation, Task};
use crate::task::{surrogate_loss, CandidateSet};
use crate::visual::{flatten, Conditioning};

/// Per-level sums of a joint score.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTerms {
    pub task: f64,
    pub visual: f64,
    pub action: f64,
}

impl JointTerms {
    pub fn total(&self) -> f64 {
        self.task + self.visual + self.action
    }
}

/// Grounding log-probability of the chosen candidate at `x`.
pub fn task_term(models: &Models, x: &Observation, cands: &CandidateSet, choice: usize) -> Result<f64, PipelineError> {
    let lp = models.grounding.log_probs(x, cands)?;
    lp.get(choice)
        .copied()
        .ok_or_else(|| PipelineError::LengthMismatch(format!("choice {choice} out of {} candidates", lp.len())))
}

/// Negative squared distance between the given actions and the inverse
/// model's raw predictions for consecutive frames.
pub fn action_term(models: &Models, plan: &[Observation], actions: &[Action]) -> Result<f64, PipelineError> {
    if plan.len() != actions.len() + 1 {
        return Err(PipelineError::LengthMismatch(format!(
            "{} frames but {} actions",
            plan.len(),
            actions.len()
        )));
    }
    let raw = models.inverse.predict_raw_sequence(plan)?;
    Ok(-raw
        .iter()
        .zip(actions)
        .map(|(r, a)| r.iter().zip(&a.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum::<f64>())
}

/// Sum over segments of grounding log-softmax, negative denoising surrogate
/// loss and action log-likelihood. Segment `i` pairs a candidate set and the
/// chosen index with a plan and the actions executed along it; the plan's
/// first frame is the observation the subgoal was chosen at.
pub fn joint_log_likelihood(
    models: &Models,
    subgoals: &[(CandidateSet, usize)],
    plans: &[ObsTrajectory],
    actions: &[Vec<Action>],
    task: &Task,
    n_terms: usize,
    seed: u64,
) -> Result<JointTerms, PipelineError> {
    if subgoals.len() != plans.len() || plans.len() != actions.len() {
        return Err(PipelineError::LengthMismatch(format!(
            "{} subgoals, {} plans, {} action sequences",
            subgoals.len(),
            plans.len(),
            actions.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = JointTerms::default();
    for (((cands, choice), plan), acts) in subgoals.iter().zip(plans).zip(actions) {
        if cands.goal != task.goal {
            return Err(PipelineError::LengthMismatch("candidate set belongs to another goal".into()));
        }
        let x = plan
            .first()
            .ok_or_else(|| PipelineError::LengthMismatch("empty plan".into()))?;
        terms.task += task_term(models, x, cands, *choice)?;
        let w = Conditioning::Subgoal(cands.candidates[*choice]);
        terms.visual -= surrogate_loss(&models.denoiser, &models.schedule, &flatten(plan), x, &w, n_terms, &mut rng)?;
        terms.action += action_term(models, plan, acts)?;
    }
    Ok(terms)
}
