use serde::{Deserialize, Serialize};

use super::VisualError;

/// Linear DDPM schedule. Arrays are indexed by step `k` in `1..=K`; index 0
/// holds the `k = 0` conventions (`alpha_bar[0] = 1`, `beta[0] = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    k: usize,
    beta_1: f64,
    beta_k: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    pub k: usize,
    pub beta_1: f64,
    pub beta_k: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            k: 100,
            beta_1: 1e-4,
            beta_k: 0.1,
        }
    }
}

impl NoiseSchedule {
    pub fn build(k: usize, beta_1: f64, beta_k: f64) -> Result<Self, VisualError> {
        if k < 1 || !(0.0 < beta_1 && beta_1 <= beta_k && beta_k < 1.0) || (k >= 2 && beta_1 == beta_k) {
            return Err(VisualError::InvalidScheduleParams(format!(
                "need K >= 1 and 0 < beta_1 < beta_K < 1, got K={k}, beta_1={beta_1}, beta_K={beta_k}"
            )));
        }
        let mut beta = vec![0.0; k + 1];
        for (i, b) in beta.iter_mut().enumerate().skip(1) {
            *b = if k == 1 {
                beta_1
            } else {
                beta_1 + (beta_k - beta_1) * (i - 1) as f64 / (k - 1) as f64
            };
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = vec![1.0; k + 1];
        for i in 1..=k {
            alpha_bar[i] = alpha_bar[i - 1] * alpha[i];
        }
        let mut beta_tilde = vec![0.0; k + 1];
        for i in 1..=k {
            beta_tilde[i] = beta[i] * (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]);
        }
        Ok(Self {
            k,
            beta_1,
            beta_k,
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
        })
    }

    pub fn from_params(p: &ScheduleParams) -> Result<Self, VisualError> {
        Self::build(p.k, p.beta_1, p.beta_k)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            k: self.k,
            beta_1: self.beta_1,
            beta_k: self.beta_k,
        }
    }

    pub fn steps(&self) -> usize {
        self.k
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k]
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bar[k]
    }

    pub fn beta_tilde(&self, k: usize) -> f64 {
        self.beta_tilde[k]
    }

    fn check_step(&self, k: usize) -> Result<(), VisualError> {
        if k == 0 || k > self.k {
            return Err(VisualError::InvalidStep { k, max: self.k });
        }
        Ok(())
    }

    /// `sqrt(alpha_bar_k) tau_0 + sqrt(1 - alpha_bar_k) eps`.
    pub fn q_sample(&self, tau_0: &[f64], k: usize, eps: &[f64]) -> Result<Vec<f64>, VisualError> {
        self.check_step(k)?;
        if tau_0.len() != eps.len() {
            return Err(VisualError::ShapeMismatch(format!(
                "trajectory has {} entries, noise has {}",
                tau_0.len(),
                eps.len()
            )));
        }
        let (a, s) = (self.alpha_bar[k].sqrt(), (1.0 - self.alpha_bar[k]).sqrt());
        Ok(tau_0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect())
    }

    /// Ancestral step
    /// `tau_{k-1} = (tau_k - (1 - alpha_k) / sqrt(1 - alpha_bar_k) eps_hat) / sqrt(alpha_k) + sqrt(beta_tilde_k) z`,
    /// with `z` ignored at `k = 1`.
    pub fn denoise_step(&self, tau_k: &[f64], eps_hat: &[f64], k: usize, z: &[f64]) -> Result<Vec<f64>, VisualError> {
        self.check_step(k)?;
        if tau_k.len() != eps_hat.len() || (k > 1 && z.len() != tau_k.len()) {
            return Err(VisualError::ShapeMismatch("denoise_step operands differ in length".into()));
        }
        let c = (1.0 - self.alpha[k]) / (1.0 - self.alpha_bar[k]).sqrt();
        let inv = 1.0 / self.alpha[k].sqrt();
        let sigma = if k > 1 { self.beta_tilde[k].sqrt() } else { 0.0 };
        Ok(tau_k
            .iter()
            .zip(eps_hat)
            .enumerate()
            .map(|(i, (t, e))| {
                let noise = if k > 1 { sigma * z[i] } else { 0.0 };
                inv * (t - c * e) + noise
            })
            .collect())
    }
}

/// Sinusoidal embedding of the step index.
pub const STEP_EMBED_DIM: usize = 16;

pub fn step_embedding(k: usize) -> [f64; STEP_EMBED_DIM] {
    let mut e = [0.0; STEP_EMBED_DIM];
    let half = STEP_EMBED_DIM / 2;
    for i in 0..half {
        let freq = 1000f64.powf(-(i as f64) / (half - 1) as f64);
        e[2 * i] = (k as f64 * freq).sin();
        e[2 * i + 1] = (k as f64 * freq).cos();
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn first_step_product() {
        let s = NoiseSchedule::from_params(&ScheduleParams::default()).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - 1e-4);
    }

    #[test]
    fn default_schedule_terminal_alpha_bar() {
        let s = NoiseSchedule::from_params(&ScheduleParams::default()).unwrap();
        // Independent recomputation of prod (1 - beta_k) over the linear grid.
        let mut prod = 1.0f64;
        for i in 0..100 {
            prod *= 1.0 - (1e-4 + (0.1 - 1e-4) * i as f64 / 99.0);
        }
        assert!((s.alpha_bar(100) - prod).abs() < 1e-15);
        assert!((prod - 0.005619).abs() < 5e-6, "{prod}");
        assert!(s.alpha_bar(100) < 0.05);
    }

    #[test]
    fn schedule_identities() {
        let s = NoiseSchedule::build(100, 1e-4, 0.1).unwrap();
        let mut prod = 1.0;
        for k in 1..=100 {
            prod *= s.alpha(k);
            assert_eq!(s.alpha_bar(k), prod);
            if k > 1 {
                assert!(s.beta_tilde(k) > 0.0 && s.beta_tilde(k) <= s.beta(k));
                assert!(s.beta(k) > s.beta(k - 1));
                assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
            }
        }
        assert_eq!(s.beta_tilde(1), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(NoiseSchedule::build(100, 0.0, 0.1).is_err());
        assert!(NoiseSchedule::build(100, 0.2, 0.1).is_err());
        assert!(NoiseSchedule::build(100, 0.1, 1.0).is_err());
        assert!(NoiseSchedule::build(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn q_sample_edge_cases() {
        let s = NoiseSchedule::build(100, 1e-4, 0.1).unwrap();
        let x = [0.3, -1.2, 2.0];
        let out = s.q_sample(&x, 10, &[0.0; 3]).unwrap();
        for (o, v) in out.iter().zip(x) {
            assert_eq!(*o, s.alpha_bar(10).sqrt() * v);
        }
        let eps = [0.5, 0.1, -0.7];
        let out = s.q_sample(&x, 100, &eps).unwrap();
        for (o, e) in out.iter().zip(eps) {
            assert!((o - e).abs() < 0.16);
        }
        assert!(s.q_sample(&x, 0, &eps).is_err());
        assert!(s.q_sample(&x, 5, &[0.0; 2]).is_err());
    }

    #[test]
    fn q_sample_moments() {
        let s = NoiseSchedule::build(100, 1e-4, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, x0, n) = (40, 1.5, 10_000);
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                s.q_sample(&[x0], k, &[e]).unwrap()[0]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (m_true, v_true) = (s.alpha_bar(k).sqrt() * x0, 1.0 - s.alpha_bar(k));
        assert!((mean - m_true).abs() < 3.0 * (v_true / n as f64).sqrt());
        let var_se = v_true * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - v_true).abs() < 3.0 * var_se);
    }

    #[test]
    fn single_step_schedule_inverts_exactly() {
        let s = NoiseSchedule::build(1, 0.3, 0.3).unwrap();
        let x0 = [0.25, -0.5, 1.0];
        let eps = [1.0, -0.3, 0.2];
        let tau = s.q_sample(&x0, 1, &eps).unwrap();
        let back = s.denoise_step(&tau, &eps, 1, &[9.0; 3]).unwrap();
        for (b, x) in back.iter().zip(x0) {
            assert!((b - x).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_distinguishes_steps() {
        for k in 1..100 {
            assert_ne!(step_embedding(k), step_embedding(k + 1));
        }
    }
}
