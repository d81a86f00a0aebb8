use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::candidates::CandidateSet;
use super::TaskError;
use crate::env::Observation;
use crate::visual::{sample_plan_flat, Conditioning, DenoiserNet, GuidanceConfig, NoiseSchedule};

/// Denoising-loss estimate of `-log p(tau | x, w)` up to constants shared by
/// all candidates: the mean of `||eps - eps_hat(tau_k, x, w, k)||^2` over
/// `n_terms` uniformly drawn steps with fresh noise.
pub fn surrogate_loss<R: Rng + ?Sized>(
    den: &DenoiserNet,
    sched: &NoiseSchedule,
    tau: &[f64],
    x: &Observation,
    w: &Conditioning,
    n_terms: usize,
    rng: &mut R,
) -> Result<f64, TaskError> {
    if n_terms == 0 {
        return Err(TaskError::InsufficientSamples);
    }
    let mut total = 0.0;
    for _ in 0..n_terms {
        let k = rng.random_range(1..=sched.steps());
        let eps: Vec<f64> = (0..tau.len()).map(|_| StandardNormal.sample(rng)).collect();
        let tau_k = sched.q_sample(tau, k, &eps).map_err(TaskError::from_visual)?;
        let pred = den.predict_eps(sched, &tau_k, &x.0, w, k).map_err(TaskError::from_visual)?;
        total += eps.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / n_terms as f64)
}

/// Scores each candidate by sampling one plan conditioned on it (without
/// feasibility guidance) and evaluating that plan's surrogate loss under the
/// same conditioning; the smallest loss wins.
pub fn elbo_select<R: Rng + ?Sized>(
    den: &DenoiserNet,
    sched: &NoiseSchedule,
    x: &Observation,
    cands: &CandidateSet,
    guidance: &GuidanceConfig,
    n_terms: usize,
    rng: &mut R,
) -> Result<usize, TaskError> {
    if n_terms == 0 {
        return Err(TaskError::InsufficientSamples);
    }
    let cfg = GuidanceConfig {
        omega_prime: 0.0,
        ..*guidance
    };
    let mut best = (0, f64::INFINITY);
    for (i, w) in cands.candidates.iter().enumerate() {
        let cond = Conditioning::Subgoal(*w);
        let tau = sample_plan_flat(den, None, sched, x, &cond, &cfg, rng).map_err(TaskError::from_visual)?;
        let loss = surrogate_loss(den, sched, &tau, x, &cond, n_terms, rng)?;
        if loss < best.1 {
            best = (i, loss);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EntityColor, GoalSpec, OBS_DIM};
    use crate::visual::Parameterization;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_terms_rejected() {
        let sched = NoiseSchedule::build(10, 1e-3, 0.2).unwrap();
        let den = DenoiserNet::new(12, &[8], Parameterization::Epsilon, sched.params(), 0);
        let goal = GoalSpec::new([EntityColor::Red; 3]).unwrap();
        let cands = crate::task::propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(0));
        let x = Observation(vec![0.0; OBS_DIM]);
        let r = elbo_select(&den, &sched, &x, &cands, &GuidanceConfig::default(), 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(TaskError::InsufficientSamples)));
    }
}
