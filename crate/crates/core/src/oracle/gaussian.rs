use rand::Rng;

use crate::visual::{ancestral_sample, NoiseSchedule, VisualError};

/// Diagonal Gaussian data distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, String> {
        if mean.len() != var.len() || var.iter().any(|v| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return Err("variances must be positive and match the mean's length".into());
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Loss-minimizing noise prediction for data `N(mu, diag(var))`: the step-`k`
/// marginal is `N(sqrt(ab) mu, ab var + (1 - ab))`, and
/// `eps* = sqrt(1 - ab) (x - sqrt(ab) mu) / (ab var + 1 - ab)`.
pub fn gaussian_optimal_eps(spec: &GaussianSpec, sched: &NoiseSchedule, x: &[f64], k: usize) -> Vec<f64> {
    let ab = sched.alpha_bar(k);
    x.iter()
        .zip(spec.mean.iter().zip(&spec.var))
        .map(|(xi, (m, v))| (1.0 - ab).sqrt() * (xi - ab.sqrt() * m) / (ab * v + 1.0 - ab))
        .collect()
}

/// Mean in `[-1, 1]`, variance in `[0.05, 1]` per dimension.
pub fn random_gaussian_spec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> GaussianSpec {
    GaussianSpec {
        mean: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        var: (0..dim).map(|_| rng.random_range(0.05..1.0)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingReport {
    /// Largest per-dimension `|sample mean - mu|`.
    pub max_mean_error: f64,
    /// Largest per-dimension `|sample var / var - 1|`.
    pub max_var_rel_error: f64,
}

/// Ancestral sampling with the closed-form noise predictor; compares the
/// empirical moments of `n` samples with the target.
pub fn gaussian_sampling_check<R: Rng + ?Sized>(
    spec: &GaussianSpec,
    sched: &NoiseSchedule,
    n: usize,
    rng: &mut R,
) -> Result<SamplingReport, VisualError> {
    let d = spec.dim();
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let s = ancestral_sample(sched, d, rng, |x, k| Ok(gaussian_optimal_eps(spec, sched, x, k)))?;
        for i in 0..d {
            sum[i] += s[i];
        }
        samples.push(s);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    for s in &samples {
        for i in 0..d {
            sq[i] += (s[i] - mean[i]).powi(2);
        }
    }
    let mut report = SamplingReport {
        max_mean_error: 0.0,
        max_var_rel_error: 0.0,
    };
    for i in 0..d {
        let var = sq[i] / (n - 1).max(1) as f64;
        report.max_mean_error = report.max_mean_error.max((mean[i] - spec.mean[i]).abs());
        report.max_var_rel_error = report.max_var_rel_error.max((var / spec.var[i] - 1.0).abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::visual::ScheduleParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::from_params(&ScheduleParams::default()).unwrap()
    }

    #[test]
    fn zero_at_marginal_mean() {
        let s = sched();
        let spec = GaussianSpec::new(vec![0.4, -1.0], vec![0.3, 2.0]).unwrap();
        let x: Vec<f64> = spec.mean.iter().map(|m| s.alpha_bar(30).sqrt() * m).collect();
        assert!(gaussian_optimal_eps(&spec, &s, &x, 30).iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn unit_variance_simplifies() {
        let s = sched();
        let spec = GaussianSpec::new(vec![0.5, 0.2], vec![1.0, 1.0]).unwrap();
        let x = [1.3, -0.7];
        let ab = s.alpha_bar(12);
        for (e, (xi, m)) in gaussian_optimal_eps(&spec, &s, &x, 12).iter().zip(x.iter().zip(&spec.mean)) {
            assert!((e - (1.0 - ab).sqrt() * (xi - ab.sqrt() * m)).abs() < 1e-15);
        }
    }

    #[test]
    fn half_alpha_bar_example() {
        // A two-step schedule with alpha_bar_1 = 0.5 exactly.
        let s = NoiseSchedule::build(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        let spec = GaussianSpec::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let e = gaussian_optimal_eps(&spec, &s, &[1.0, 0.0], 1);
        assert!((e[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(e[1], 0.0);
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(GaussianSpec::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianSpec::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn sampling_reproduces_a_gaussian() {
        let s = sched();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = random_gaussian_spec(3, &mut rng);
        let r = gaussian_sampling_check(&spec, &s, 2000, &mut rng).unwrap();
        assert!(r.max_mean_error < 0.05, "{r:?}");
        assert!(r.max_var_rel_error < 0.2, "{r:?}");
    }
}
