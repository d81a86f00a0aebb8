use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::loss::{log_softmax, log_sum_exp, softmax_cross_entropy};
use crate::nn::{fit, AdamWParams, FitOptions, Network, NnError, Tensor};
use crate::task::argmax;

/// Isotropic 2-D Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub mean: [f64; 2],
    pub std: f64,
}

impl GaussianComponent {
    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let v = self.std * self.std;
        let d2 = (x[0] - self.mean[0]).powi(2) + (x[1] - self.mean[1]).powi(2);
        -d2 / (2.0 * v) - (2.0 * std::f64::consts::PI * v).ln()
    }
}

/// `log p(x | c) - log p_mix(x)` for every component, with equal mixture weights.
pub fn log_ratios(components: &[GaussianComponent], x: [f64; 2]) -> Vec<f64> {
    let lp: Vec<f64> = components.iter().map(|c| c.log_pdf(x)).collect();
    let log_mix = log_sum_exp(&lp) - (components.len() as f64).ln();
    lp.iter().map(|l| l - log_mix).collect()
}

/// Labeled samples from three overlapping Gaussians with their exact log-ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatioData {
    pub components: Vec<GaussianComponent>,
    pub xs: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub true_log_ratios: Vec<Vec<f64>>,
}

pub fn three_components() -> Vec<GaussianComponent> {
    vec![
        GaussianComponent { mean: [0.0, 0.0], std: 1.0 },
        GaussianComponent { mean: [2.0, 0.0], std: 1.0 },
        GaussianComponent { mean: [1.0, 1.8], std: 1.0 },
    ]
}

pub fn density_ratio_oracle<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> DensityRatioData {
    let components = three_components();
    let mut xs = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    let mut ratios = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let c = rng.random_range(0..components.len());
        let g = components[c];
        let z: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let x = [g.mean[0] + g.std * z[0], g.mean[1] + g.std * z[1]];
        xs.push(x);
        labels.push(c);
        ratios.push(log_ratios(&components, x));
    }
    DensityRatioData {
        components,
        xs,
        labels,
        true_log_ratios: ratios,
    }
}

/// Small softmax classifier on the samples. With equal class priors its
/// log-softmax plus `log M` estimates the log-ratios. The learning rate steps
/// down from 1e-3 to 3e-4 to 1e-4 over halves and quarters of `epochs`; at a
/// constant rate the estimate jitters enough to move boundary argmaxes.
pub fn train_ratio_classifier(data: &DensityRatioData, epochs: usize, seed: u64) -> Result<Network, NnError> {
    let m = data.components.len();
    let mut net = Network::mlp(2, &[32, 32], m, seed);
    let stages = [(1e-3, epochs / 2), (3e-4, epochs / 4), (1e-4, epochs - epochs / 2 - epochs / 4)];
    for (i, (lr, n_epochs)) in stages.into_iter().enumerate() {
        if n_epochs == 0 {
            continue;
        }
        let opts = FitOptions {
            epochs: n_epochs,
            batch: 128,
            optim: AdamWParams::new(lr, 0.0),
            seed: seed.wrapping_add(i as u64),
        };
        fit(
            &mut net,
            data.xs.len(),
            &opts,
            |idx, _| {
                let x: Vec<[f64; 2]> = idx.iter().map(|&i| data.xs[i]).collect();
                let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
                (Tensor::from_rows(&x).expect("sized"), y)
            },
            |out, y| softmax_cross_entropy(out, y),
        )?;
    }
    Ok(net)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    /// Fraction of points where the estimated and true log-ratios share the argmax.
    pub argmax_agreement: f64,
    /// Mean absolute log-ratio error over points and classes, in nats.
    pub mean_abs_error: f64,
}

pub fn evaluate_ratio_classifier(net: &Network, data: &DensityRatioData) -> Result<RatioReport, NnError> {
    let m = data.components.len() as f64;
    let out = net.forward(&Tensor::from_rows(&data.xs)?)?;
    let (mut agree, mut abs_err, mut terms) = (0usize, 0.0, 0usize);
    for (logits, truth) in out.data().chunks(data.components.len()).zip(&data.true_log_ratios) {
        let est: Vec<f64> = log_softmax(logits).iter().map(|l| l + m.ln()).collect();
        agree += (argmax(&est) == argmax(truth)) as usize;
        for (e, t) in est.iter().zip(truth) {
            abs_err += (e - t).abs();
            terms += 1;
        }
    }
    Ok(RatioReport {
        argmax_agreement: agree as f64 / data.xs.len() as f64,
        mean_abs_error: abs_err / terms as f64,
    })
}

/// Convenience: fresh train/test draws from one seed.
pub fn ratio_experiment(n_train: usize, n_test: usize, epochs: usize, seed: u64) -> Result<RatioReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = density_ratio_oracle(n_train, &mut rng);
    let test = density_ratio_oracle(n_test, &mut rng);
    let net = train_ratio_classifier(&train, epochs, seed)?;
    evaluate_ratio_classifier(&net, &test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_mean_has_largest_ratio_when_separated() {
        let comps = vec![
            GaussianComponent { mean: [0.0, 0.0], std: 0.5 },
            GaussianComponent { mean: [5.0, 0.0], std: 0.5 },
            GaussianComponent { mean: [0.0, 5.0], std: 0.5 },
        ];
        for (i, c) in comps.iter().enumerate() {
            assert_eq!(argmax(&log_ratios(&comps, c.mean)), i);
        }
    }

    #[test]
    fn symmetric_midpoint_has_equal_ratios() {
        let comps = vec![
            GaussianComponent { mean: [-1.0, 0.0], std: 1.0 },
            GaussianComponent { mean: [1.0, 0.0], std: 1.0 },
        ];
        let r = log_ratios(&comps, [0.0, 0.3]);
        assert!((r[0] - r[1]).abs() < 1e-15);
    }

    #[test]
    fn ratios_average_to_one_under_the_mixture() {
        // sum_c p(x|c) / p_mix(x) = M for every x.
        let comps = three_components();
        let r = log_ratios(&comps, [0.7, -0.2]);
        let s: f64 = r.iter().map(|v| v.exp()).sum();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_integrates_to_one() {
        let g = GaussianComponent { mean: [0.3, -0.2], std: 0.7 };
        let h = 0.02;
        let mut total = 0.0;
        for i in -300..300 {
            for j in -300..300 {
                total += g.log_pdf([i as f64 * h, j as f64 * h]).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}
