use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::{unflatten, Conditioning, DenoiserNet};
use super::feasibility::FeasibilityClassifier;
use super::schedule::NoiseSchedule;
use super::VisualError;
use crate::env::{ObsTrajectory, Observation, OBS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Classifier-free guidance scale.
    pub omega: f64,
    /// Feasibility-gradient scale.
    pub omega_prime: f64,
    /// When set, the feasibility gradient is multiplied by `sqrt(1 - alpha_bar_k)`
    /// instead of being applied as is.
    pub scaled_gradient: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            omega: 4.0,
            omega_prime: 1.0,
            scaled_gradient: false,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), VisualError> {
        if !(self.omega >= 0.0 && self.omega_prime >= 0.0) || !self.omega.is_finite() || !self.omega_prime.is_finite() {
            return Err(VisualError::InvalidConfig(format!(
                "guidance scales must be finite and nonnegative, got omega={} omega'={}",
                self.omega, self.omega_prime
            )));
        }
        Ok(())
    }

    /// Rejects settings that need a branch the denoiser never trained.
    pub fn validate_for(&self, den: &DenoiserNet) -> Result<(), VisualError> {
        self.validate()?;
        if den.drop_prob == 0.0 && self.omega != 1.0 {
            return Err(VisualError::InvalidConfig(
                "denoiser was trained without null tokens, so omega must be 1".into(),
            ));
        }
        Ok(())
    }
}

/// `(1 - omega) eps_u + omega eps_c - omega' c_k grad`, with `c_k` equal to 1
/// or `sqrt(1 - alpha_bar_k)`. Written so that `omega = 1` returns `eps_c`
/// and `omega = 0` returns `eps_u` bit for bit when `omega' = 0`.
pub fn combine_guidance(
    eps_c: &[f64],
    eps_u: &[f64],
    grad_log_g: Option<&[f64]>,
    cfg: &GuidanceConfig,
    sched: &NoiseSchedule,
    k: usize,
) -> Vec<f64> {
    let w = cfg.omega;
    let mut out: Vec<f64> = eps_c
        .iter()
        .zip(eps_u)
        .map(|(c, u)| (1.0 - w) * u + w * c)
        .collect();
    if cfg.omega_prime != 0.0 {
        if let Some(g) = grad_log_g {
            let scale = if cfg.scaled_gradient {
                cfg.omega_prime * (1.0 - sched.alpha_bar(k)).sqrt()
            } else {
                cfg.omega_prime
            };
            for (o, gi) in out.iter_mut().zip(g) {
                *o -= scale * gi;
            }
        }
    }
    out
}

/// Guided noise estimate for one reverse step. The unconditional branch is the
/// denoiser fed the null token; the feasibility term is skipped when
/// `omega' = 0` or no classifier is given.
#[allow(clippy::too_many_arguments)]
pub fn guided_noise(
    den: &DenoiserNet,
    g: Option<&FeasibilityClassifier>,
    sched: &NoiseSchedule,
    tau_k: &[f64],
    x_t: &[f64],
    w: &Conditioning,
    k: usize,
    cfg: &GuidanceConfig,
) -> Result<Vec<f64>, VisualError> {
    let (eps_c, eps_u) = if cfg.omega == 1.0 {
        let c = den.predict_eps(sched, tau_k, x_t, w, k)?;
        let u = vec![0.0; c.len()];
        (c, u)
    } else if cfg.omega == 0.0 {
        let u = den.predict_eps(sched, tau_k, x_t, &Conditioning::Null, k)?;
        (vec![0.0; u.len()], u)
    } else {
        let mut both = den.predict_eps_many(sched, tau_k, x_t, &[*w, Conditioning::Null], k)?;
        let u = both.pop().expect("two rows");
        (both.pop().expect("two rows"), u)
    };
    let grad = match g {
        Some(g) if cfg.omega_prime != 0.0 => Some(g.grad_log_prob(tau_k)?),
        _ => None,
    };
    Ok(combine_guidance(&eps_c, &eps_u, grad.as_deref(), cfg, sched, k))
}

/// Runs the reverse chain from `tau_K ~ N(0, I)` down to `tau_0`, asking
/// `eps_fn(tau_k, k)` for the noise estimate at each step.
pub fn ancestral_sample<R, F>(sched: &NoiseSchedule, dim: usize, rng: &mut R, mut eps_fn: F) -> Result<Vec<f64>, VisualError>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], usize) -> Result<Vec<f64>, VisualError>,
{
    let mut tau: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    for k in (1..=sched.steps()).rev() {
        let eps_hat = eps_fn(&tau, k)?;
        let z: Vec<f64> = if k > 1 {
            (0..dim).map(|_| StandardNormal.sample(rng)).collect()
        } else {
            Vec::new()
        };
        tau = sched.denoise_step(&tau, &eps_hat, k, &z)?;
    }
    Ok(tau)
}

/// Flat trajectory sample; the first frame is overwritten with `x_t`.
pub fn sample_plan_flat<R: Rng + ?Sized>(
    den: &DenoiserNet,
    g: Option<&FeasibilityClassifier>,
    sched: &NoiseSchedule,
    x_t: &Observation,
    w: &Conditioning,
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Result<Vec<f64>, VisualError> {
    if x_t.0.len() != OBS_DIM {
        return Err(VisualError::ShapeMismatch(format!("observation has {} dims", x_t.0.len())));
    }
    let mut tau = ancestral_sample(sched, den.traj_dim(), rng, |tau_k, k| {
        guided_noise(den, g, sched, tau_k, &x_t.0, w, k, cfg)
    })?;
    tau[..OBS_DIM].copy_from_slice(&x_t.0);
    Ok(tau)
}

pub fn sample_plan<R: Rng + ?Sized>(
    den: &DenoiserNet,
    g: Option<&FeasibilityClassifier>,
    sched: &NoiseSchedule,
    x_t: &Observation,
    w: &Conditioning,
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Result<ObsTrajectory, VisualError> {
    Ok(unflatten(&sample_plan_flat(den, g, sched, x_t, w, cfg, rng)?))
}
