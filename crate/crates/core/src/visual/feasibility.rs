use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::{flatten, traj_dim};
use super::schedule::NoiseSchedule;
use super::VisualError;
use crate::env::{VideoRecord, OBS_DIM};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{bce_with_logits, log_sigmoid, sigmoid};
use crate::nn::{fit, AdamWParams, FitOptions, Network, Tensor};

/// Frames disturbed per negative: a tenth of the trajectory, rounded up.
pub fn swap_count(len: usize) -> usize {
    len.div_ceil(10)
}

/// Picks `ceil(len / 10)` distinct frames and swaps each, in turn, with a
/// uniformly chosen neighbor.
pub fn make_negatives<T: Clone, R: Rng + ?Sized>(traj: &[T], rng: &mut R) -> Result<Vec<T>, VisualError> {
    let n = traj.len();
    if n < 3 {
        return Err(VisualError::TooShort(n));
    }
    let mut out = traj.to_vec();
    for i in sample(rng, n, swap_count(n)) {
        let j = if i == 0 {
            1
        } else if i == n - 1 {
            n - 2
        } else if rng.random_bool(0.5) {
            i - 1
        } else {
            i + 1
        };
        out.swap(i, j);
    }
    Ok(out)
}

/// First frame followed by consecutive frame differences. A fixed invertible
/// linear map, so the classifier is still a function of the trajectory; it
/// makes out-of-order frames (reversed steps) easy to see.
pub fn frame_differences(tau: &[f64]) -> Vec<f64> {
    let mut z = tau.to_vec();
    for i in (OBS_DIM..tau.len()).rev() {
        z[i] -= tau[i - OBS_DIM];
    }
    z
}

/// Adjoint of [`frame_differences`]: maps a gradient in difference
/// coordinates back to trajectory coordinates.
fn frame_differences_adjoint(g: &[f64]) -> Vec<f64> {
    let mut out = g.to_vec();
    for i in 0..g.len().saturating_sub(OBS_DIM) {
        out[i] -= g[i + OBS_DIM];
    }
    out
}

/// Binary classifier over flattened trajectories: does the frame sequence look
/// like one the action model can follow? The network reads
/// [`frame_differences`] of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityClassifier {
    pub net: Network,
}

pub const FEASIBILITY_ROLE: &str = "feasibility";

impl FeasibilityClassifier {
    pub fn new(horizon: usize, hidden: &[usize], seed: u64) -> Self {
        Self {
            net: Network::mlp(traj_dim(horizon), hidden, 1, seed),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check(&self, tau: &[f64]) -> Result<(), VisualError> {
        if tau.len() != self.input_dim() {
            return Err(VisualError::ShapeMismatch(format!(
                "feasibility classifier expects {} inputs, got {}",
                self.input_dim(),
                tau.len()
            )));
        }
        Ok(())
    }

    pub fn logit(&self, tau: &[f64]) -> Result<f64, VisualError> {
        self.check(tau)?;
        Ok(self.net.forward(&Tensor::vector(&frame_differences(tau)))?.data()[0])
    }

    pub fn logits(&self, taus: &[Vec<f64>]) -> Result<Vec<f64>, VisualError> {
        if taus.is_empty() {
            return Ok(Vec::new());
        }
        for t in taus {
            self.check(t)?;
        }
        let rows: Vec<Vec<f64>> = taus.iter().map(|t| frame_differences(t)).collect();
        Ok(self.net.forward(&Tensor::from_rows(&rows)?)?.into_data())
    }

    pub fn prob(&self, tau: &[f64]) -> Result<f64, VisualError> {
        Ok(sigmoid(self.logit(tau)?))
    }

    pub fn log_prob(&self, tau: &[f64]) -> Result<f64, VisualError> {
        Ok(log_sigmoid(self.logit(tau)?))
    }

    /// `grad_tau log sigmoid(logit(tau)) = (1 - sigmoid(logit)) grad_tau logit`.
    pub fn grad_log_prob(&self, tau: &[f64]) -> Result<Vec<f64>, VisualError> {
        self.check(tau)?;
        let trace = self.net.forward_trace(&Tensor::vector(&frame_differences(tau)))?;
        let logit = trace.output()[0];
        let upstream = Tensor::new(vec![1, 1], vec![1.0 - sigmoid(logit)])?;
        let (_, g) = self.net.backward(&trace, &upstream)?;
        Ok(frame_differences_adjoint(g.data()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            role: FEASIBILITY_ROLE.into(),
            meta: vec![],
            network: self.net.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, VisualError> {
        if ck.role != FEASIBILITY_ROLE || ck.network.output_dim() != 1 {
            return Err(VisualError::Incompatible(format!(
                "expected a feasibility checkpoint, got role {:?}",
                ck.role
            )));
        }
        Ok(Self {
            net: ck.network.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub hidden: [usize; 2],
    /// Fraction of examples replaced by a lightly noised copy.
    pub noise_prob: f64,
    /// Noise augmentation only uses steps with `alpha_bar` at least this.
    pub min_alpha_bar: f64,
    pub seed: u64,
}

impl Default for FeasibilityTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            weight_decay: 1e-6,
            batch: 256,
            hidden: [256, 128],
            noise_prob: 0.5,
            min_alpha_bar: 0.9,
            seed: 0,
        }
    }
}

/// Negative for `traj` that differs from it, or `None` when no swap can change it.
fn distinct_negative<R: Rng + ?Sized>(traj: &[Vec<f64>], rng: &mut R) -> Option<Vec<Vec<f64>>> {
    for _ in 0..16 {
        let neg = make_negatives(traj, rng).ok()?;
        if neg != traj {
            return Some(neg);
        }
    }
    None
}

/// Positives are dataset trajectories, negatives are freshly shuffled copies
/// (redrawn every epoch, one per positive). Trajectories whose frames are all
/// equal are dropped since no swap changes them.
pub fn train_feasibility(
    data: &[VideoRecord],
    sched: &NoiseSchedule,
    cfg: &FeasibilityTrainConfig,
) -> Result<(FeasibilityClassifier, Vec<f64>), VisualError> {
    let frames: Vec<Vec<Vec<f64>>> = data
        .iter()
        .map(|r| r.obs.iter().map(|o| o.0.clone()).collect::<Vec<_>>())
        .filter(|f: &Vec<Vec<f64>>| f.iter().any(|x| x != &f[0]))
        .collect();
    if frames.is_empty() {
        return Err(VisualError::EmptyDataset);
    }
    let horizon = frames[0].len();
    let mut clf = FeasibilityClassifier::new(horizon, &cfg.hidden, cfg.seed);
    let noisy_steps: Vec<usize> = (1..=sched.steps())
        .filter(|&k| sched.alpha_bar(k) >= cfg.min_alpha_bar)
        .collect();
    let n = frames.len();
    let d = traj_dim(horizon);
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch: cfg.batch,
        optim: AdamWParams::new(cfg.lr, cfg.weight_decay),
        seed: cfg.seed ^ 0xfea5,
    };
    let history = fit(
        &mut clf.net,
        2 * n,
        &opts,
        |idx, rng| {
            let mut rows = Vec::with_capacity(idx.len() * d);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                let (traj, label) = if i < n {
                    (frames[i].clone(), 1.0)
                } else {
                    let src = &frames[i - n];
                    (distinct_negative(src, rng).expect("non-constant trajectory"), 0.0)
                };
                let mut flat: Vec<f64> = traj.into_iter().flatten().collect();
                if !noisy_steps.is_empty() && rng.random_bool(cfg.noise_prob) {
                    let k = noisy_steps[rng.random_range(0..noisy_steps.len())];
                    let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    flat = sched.q_sample(&flat, k, &eps).expect("sized");
                }
                rows.extend(frame_differences(&flat));
                labels.push(label);
            }
            (Tensor::new(vec![idx.len(), d], rows).expect("sized"), labels)
        },
        |out, labels| bce_with_logits(out, labels),
    )?;
    crate::nn::train::warn_if_not_decreasing("feasibility", &history);
    Ok((clf, history))
}

/// Held-out accuracy on clean positives and one shuffled negative per positive:
/// `(overall accuracy, fraction of positives above 0.5)`.
pub fn feasibility_accuracy(
    clf: &FeasibilityClassifier,
    data: &[VideoRecord],
    seed: u64,
) -> Result<(f64, f64), VisualError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut correct, mut total, mut pos_hit, mut pos_total) = (0usize, 0usize, 0usize, 0usize);
    for rec in data {
        let frames: Vec<Vec<f64>> = rec.obs.iter().map(|o| o.0.clone()).collect();
        let Some(neg) = distinct_negative(&frames, &mut rng) else {
            continue;
        };
        let p = clf.prob(&flatten(&rec.obs))?;
        let q = clf.prob(&neg.concat())?;
        pos_total += 1;
        if p > 0.5 {
            pos_hit += 1;
            correct += 1;
        }
        if q <= 0.5 {
            correct += 1;
        }
        total += 2;
    }
    if total == 0 {
        return Err(VisualError::EmptyDataset);
    }
    Ok((correct as f64 / total as f64, pos_hit as f64 / pos_total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::relative_error;
    use proptest::prelude::*;

    #[test]
    fn twelve_frames_get_two_swaps() {
        assert_eq!(swap_count(12), 2);
        assert_eq!(swap_count(50), 5);
        assert_eq!(swap_count(3), 1);
    }

    #[test]
    fn too_short_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(make_negatives(&[1, 2], &mut rng), Err(VisualError::TooShort(2))));
    }

    #[test]
    fn constant_trajectory_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(make_negatives(&[7; 12], &mut rng).unwrap(), vec![7; 12]);
    }

    proptest! {
        #[test]
        fn negatives_permute_frames(len in 3usize..30, seed: u64) {
            let traj: Vec<usize> = (0..len).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let neg = make_negatives(&traj, &mut rng).unwrap();
            let mut sorted = neg.clone();
            sorted.sort();
            prop_assert_eq!(&sorted, &traj);
            // Only adjacent swaps: no frame moves more than the number of swaps.
            for (pos, &f) in neg.iter().enumerate() {
                prop_assert!(pos.abs_diff(f) <= swap_count(len));
            }
        }
    }

    #[test]
    fn grad_log_prob_matches_finite_differences() {
        let clf = FeasibilityClassifier::new(3, &[16, 8], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau: Vec<f64> = (0..clf.input_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = clf.grad_log_prob(&tau).unwrap();
        let h = 1e-5;
        for i in (0..tau.len()).step_by(7) {
            let mut p = tau.clone();
            p[i] += h;
            let mut m = tau.clone();
            m[i] -= h;
            let fd = (clf.log_prob(&p).unwrap() - clf.log_prob(&m).unwrap()) / (2.0 * h);
            assert!(relative_error(g[i], fd) < 1e-4, "dim {i}: {} vs {fd}", g[i]);
        }
    }
}
