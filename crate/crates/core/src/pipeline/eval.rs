use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::episode::{plan_and_execute, EpisodeResult, Models, PipelineConfig, PlannerMode};
use super::PipelineError;
use crate::env::{remaining_work, reset, EnvParams, Task};

/// The ω' grid swept by default.
pub const DEFAULT_SWEEP: [f64; 8] = [0.0, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `i`-th evaluation task for `seed`. Mixed so it never collides
/// with the `master ^ i` seeds used for training data in practice.
pub fn eval_task_seed(seed: u64, i: u64) -> u64 {
    splitmix(splitmix(seed ^ 0x5EED_E7A1) ^ i)
}

/// Seed driving the planner in episode `i` of evaluation seed `seed`.
pub fn episode_seed(seed: u64, i: u64) -> u64 {
    splitmix(eval_task_seed(seed, i) ^ 0xE915_0DE5)
}

/// Evaluation tasks for one seed. With `multi_subgoal` set, tasks solvable
/// by a single subgoal are skipped.
pub fn eval_tasks(seed: u64, n_tasks: usize, env: EnvParams, multi_subgoal: bool) -> Result<Vec<(u64, Task)>, PipelineError> {
    let mut out = Vec::with_capacity(n_tasks);
    let mut i = 0u64;
    while out.len() < n_tasks {
        let task = Task::sample(eval_task_seed(seed, i), env)?;
        if !multi_subgoal || remaining_work(&reset(&task), &task.goal) >= 2 {
            out.push((episode_seed(seed, i), task));
        }
        i += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub n_tasks: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    pub completion_rate: f64,
    /// Standard error of the per-seed rates; absent with a single seed.
    pub stderr: Option<f64>,
}

impl EvalReport {
    pub fn from_rates(mode: String, n_tasks: usize, seeds: Vec<u64>, per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n.max(1.0);
        let stderr = (per_seed.len() >= 2).then(|| {
            let var = per_seed.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self {
            mode,
            n_tasks,
            seeds,
            per_seed,
            completion_rate: mean,
            stderr,
        }
    }
}

/// Runs `policy` on `n_tasks` fresh tasks per seed. The policy receives the
/// task and a per-episode seed and reports success.
pub fn evaluate_episodes<F>(
    label: &str,
    env: EnvParams,
    n_tasks: usize,
    seeds: &[u64],
    multi_subgoal: bool,
    mut policy: F,
) -> Result<EvalReport, PipelineError>
where
    F: FnMut(&Task, u64) -> Result<bool, PipelineError>,
{
    if n_tasks == 0 || seeds.is_empty() {
        return Err(PipelineError::InvalidConfig("evaluation needs at least one task and one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut wins = 0usize;
        for (ep_seed, task) in eval_tasks(seed, n_tasks, env, multi_subgoal)? {
            if policy(&task, ep_seed)? {
                wins += 1;
            }
        }
        let rate = wins as f64 / n_tasks as f64;
        log::info!("{label} seed {seed}: {wins}/{n_tasks}");
        per_seed.push(rate);
    }
    Ok(EvalReport::from_rates(label.to_string(), n_tasks, seeds.to_vec(), per_seed))
}

/// Completion rate of `mode` over fresh tasks per seed.
pub fn evaluate(
    models: &Models,
    env: EnvParams,
    n_tasks: usize,
    mode: PlannerMode,
    seeds: &[u64],
    cfg: &PipelineConfig,
    multi_subgoal: bool,
) -> Result<EvalReport, PipelineError> {
    models.check_compatible(&env, None)?;
    evaluate_episodes(mode.name(), env, n_tasks, seeds, multi_subgoal, |task, s| {
        let r: EpisodeResult = plan_and_execute(models, task, mode, cfg, s)?;
        Ok(r.success)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega_prime: f64,
    pub report: EvalReport,
}

/// Full-mode completion rate at each ω'.
pub fn sweep_guidance(
    models: &Models,
    env: EnvParams,
    omega_primes: &[f64],
    n_tasks: usize,
    seeds: &[u64],
    cfg: &PipelineConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    if let Some(v) = omega_primes.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(PipelineError::InvalidConfig(format!("omega_prime must be nonnegative, got {v}")));
    }
    omega_primes
        .iter()
        .map(|&op| {
            let mut c = cfg.clone();
            c.guidance.omega_prime = op;
            let report = evaluate(models, env, n_tasks, PlannerMode::Full, seeds, &c, false)?;
            Ok(SweepRow { omega_prime: op, report })
        })
        .collect()
}

fn comment_block(out: &mut String, echo: &str) {
    for line in echo.lines() {
        let _ = writeln!(out, "# {line}");
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV with one row per (mode, seed) and one `all` row per mode. `echo` is
/// written first as `#` comments.
pub fn report_csv(reports: &[EvalReport], echo: &str) -> String {
    let mut out = String::new();
    comment_block(&mut out, echo);
    out.push_str("mode,seed,n_tasks,completion_rate,stderr\n");
    for r in reports {
        for (s, rate) in r.seeds.iter().zip(&r.per_seed) {
            let _ = writeln!(out, "{},{},{},{:.6},", r.mode, s, r.n_tasks, rate);
        }
        let _ = writeln!(out, "{},all,{},{:.6},{}", r.mode, r.n_tasks, r.completion_rate, fmt_opt(r.stderr));
    }
    out
}

/// CSV with one row per ω'.
pub fn sweep_csv(rows: &[SweepRow], echo: &str) -> String {
    let mut out = String::new();
    comment_block(&mut out, echo);
    out.push_str("omega_prime,n_tasks,completion_rate,stderr\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            r.omega_prime,
            r.report.n_tasks,
            r.report.completion_rate,
            fmt_opt(r.report.stderr)
        );
    }
    out
}
