use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::action::InvDynNet;
use crate::env::{
    goal_satisfied, goal_unreachable, observe, reset, step, EnvParams, Observation, SubgoalSpec, Task, OBS_DIM,
};
use crate::task::{llm_propose, select_subgoal, CandidateSet, GroundingClassifier, LlmClientConfig};
use crate::visual::{
    sample_plan, Conditioning, DenoiserNet, FeasibilityClassifier, GuidanceConfig, NoiseSchedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Grounded subgoal choice and feasibility guidance.
    Full,
    /// Uniformly random candidate instead of the grounding classifier.
    NoTaskRefine,
    /// No feasibility guidance.
    NoVisualRefine,
    /// Neither refinement.
    NoRefine,
    /// No subgoals: the denoiser is conditioned on the goal token directly.
    Flat,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 5] = [
        PlannerMode::Full,
        PlannerMode::NoTaskRefine,
        PlannerMode::NoVisualRefine,
        PlannerMode::NoRefine,
        PlannerMode::Flat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerMode::Full => "full",
            PlannerMode::NoTaskRefine => "no-task-refine",
            PlannerMode::NoVisualRefine => "no-visual-refine",
            PlannerMode::NoRefine => "no-refine",
            PlannerMode::Flat => "flat",
        }
    }

    pub fn grounds_subgoals(self) -> bool {
        matches!(self, PlannerMode::Full | PlannerMode::NoVisualRefine)
    }

    pub fn uses_feasibility(self) -> bool {
        matches!(self, PlannerMode::Full | PlannerMode::NoTaskRefine | PlannerMode::Flat)
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Self::ALL
            .into_iter()
            .find(|m| m.name().replace('-', "") == key)
            .ok_or_else(|| format!("unknown mode {s:?} (expected one of full, no-task-refine, no-visual-refine, no-refine, flat)"))
    }
}

/// Trained components plus the schedule the denoiser was trained with.
#[derive(Debug, Clone)]
pub struct Models {
    pub grounding: GroundingClassifier,
    pub denoiser: DenoiserNet,
    pub feasibility: FeasibilityClassifier,
    pub inverse: InvDynNet,
    pub schedule: NoiseSchedule,
}

impl Models {
    pub fn new(
        grounding: GroundingClassifier,
        denoiser: DenoiserNet,
        feasibility: FeasibilityClassifier,
        inverse: InvDynNet,
    ) -> Result<Self, PipelineError> {
        let schedule = NoiseSchedule::from_params(&denoiser.schedule)?;
        Ok(Self {
            grounding,
            denoiser,
            feasibility,
            inverse,
            schedule,
        })
    }

    /// Dimension and schedule agreement between the components and the world.
    pub fn check_compatible(&self, env: &EnvParams, schedule: Option<&NoiseSchedule>) -> Result<(), PipelineError> {
        if self.denoiser.horizon != env.horizon {
            return Err(PipelineError::ModelIncompatible(format!(
                "denoiser horizon {} but environment horizon {}",
                self.denoiser.horizon, env.horizon
            )));
        }
        if self.feasibility.input_dim() != self.denoiser.traj_dim() {
            return Err(PipelineError::ModelIncompatible(format!(
                "feasibility classifier expects {} inputs, trajectories have {}",
                self.feasibility.input_dim(),
                self.denoiser.traj_dim()
            )));
        }
        if let Some(s) = schedule {
            if s.params() != self.denoiser.schedule {
                return Err(PipelineError::ModelIncompatible(format!(
                    "configured schedule {:?} differs from the denoiser's {:?}",
                    s.params(),
                    self.denoiser.schedule
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub guidance: GuidanceConfig,
    pub max_subgoals: usize,
    /// Re-sample the plan after every executed action instead of executing a
    /// whole plan open-loop.
    pub replan_every_step: bool,
    /// End an episode as soon as the goal can no longer be met. This never
    /// changes success, only how many subgoals a failed episode issues.
    pub stop_when_unreachable: bool,
    pub llm: LlmClientConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            guidance: GuidanceConfig::default(),
            max_subgoals: 8,
            replan_every_step: false,
            stop_when_unreachable: true,
            llm: LlmClientConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Subgoal text per planning round (`goal` for the flat planner).
    pub subgoals_issued: Vec<String>,
    pub steps_taken: usize,
    /// Feasibility probability of every executed plan.
    pub feasibility: Vec<f64>,
    pub seed: u64,
}

/// Subgoal index under `mode`: the grounding classifier's argmax, or a uniform
/// draw when task refinement is off.
pub fn choose_subgoal<R: Rng + ?Sized>(
    grounding: &GroundingClassifier,
    x: &Observation,
    cands: &CandidateSet,
    mode: PlannerMode,
    rng: &mut R,
) -> Result<usize, PipelineError> {
    if mode.grounds_subgoals() {
        Ok(select_subgoal(grounding, x, cands)?.0)
    } else {
        Ok(rng.random_range(0..cands.len()))
    }
}

fn execute_plan(models: &Models, state: &mut crate::env::WorldState, plan: &[Observation], n: usize) -> Result<(), PipelineError> {
    for t in 0..n {
        let a = models.inverse.predict_action(&plan[t], &plan[t + 1])?;
        *state = step(state, &a);
    }
    Ok(())
}

/// Runs one episode. Two generators are derived from `seed`: one for
/// candidate proposal and random subgoal choice, one for diffusion noise, so
/// modes that differ only in guidance see identical noise.
pub fn plan_and_execute(
    models: &Models,
    task: &Task,
    mode: PlannerMode,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EpisodeResult, PipelineError> {
    let env = task.initial.params;
    models.check_compatible(&env, None)?;
    let guidance = GuidanceConfig {
        omega_prime: if mode.uses_feasibility() { cfg.guidance.omega_prime } else { 0.0 },
        ..cfg.guidance
    };
    guidance.validate_for(&models.denoiser)?;
    let mut task_rng = ChaCha8Rng::seed_from_u64(seed);
    task_rng.set_stream(1);
    let mut plan_rng = ChaCha8Rng::seed_from_u64(seed);
    plan_rng.set_stream(2);
    let n_actions = env.actions_per_segment();
    let feas = (guidance.omega_prime != 0.0).then_some(&models.feasibility);

    let mut state = reset(task);
    let mut result = EpisodeResult {
        success: false,
        subgoals_issued: Vec::new(),
        steps_taken: 0,
        feasibility: Vec::new(),
        seed,
    };
    for _ in 0..cfg.max_subgoals {
        if goal_satisfied(&state, &task.goal) {
            break;
        }
        if cfg.stop_when_unreachable && goal_unreachable(&state, &task.goal) {
            break;
        }
        let x = observe(&state);
        let (cond, label) = match mode {
            PlannerMode::Flat => (Conditioning::Goal(task.goal), "goal".to_string()),
            _ => {
                let (cands, _) = llm_propose(&task.goal, &cfg.llm, &mut task_rng);
                let i = choose_subgoal(&models.grounding, &x, &cands, mode, &mut task_rng)?;
                let w: SubgoalSpec = cands.candidates[i];
                (Conditioning::Subgoal(w), w.to_string())
            }
        };
        let plan = sample_plan(&models.denoiser, feas, &models.schedule, &x, &cond, &guidance, &mut plan_rng)?;
        result.feasibility.push(models.feasibility.prob(&crate::visual::flatten(&plan))?);
        if cfg.replan_every_step {
            let mut plan = plan;
            for t in 0..n_actions {
                execute_plan(models, &mut state, &plan, 1)?;
                if t + 1 < n_actions {
                    let x = observe(&state);
                    plan = sample_plan(&models.denoiser, feas, &models.schedule, &x, &cond, &guidance, &mut plan_rng)?;
                }
            }
        } else {
            execute_plan(models, &mut state, &plan, n_actions)?;
        }
        result.steps_taken += n_actions;
        result.subgoals_issued.push(label);
    }
    result.success = goal_satisfied(&state, &task.goal);
    debug_assert!(result.steps_taken <= cfg.max_subgoals * n_actions);
    debug_assert_eq!(observe(&state).0.len(), OBS_DIM);
    Ok(result)
}
