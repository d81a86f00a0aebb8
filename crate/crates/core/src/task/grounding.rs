use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::candidates::{CandidateSet, M};
use super::TaskError;
use crate::env::{ClassifyRecord, GoalSpec, Observation, SubgoalSpec, GOAL_DIM, OBS_DIM, SUBGOAL_DIM};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{log_softmax, softmax_cross_entropy};
use crate::nn::{fit, AdamWParams, FitOptions, Network, Tensor};

pub const GROUNDING_INPUT_DIM: usize = OBS_DIM + GOAL_DIM + M * SUBGOAL_DIM;
pub const GROUNDING_ROLE: &str = "grounding";

/// Multi-class classifier over candidate slots: logit `j` scores how well
/// candidate `j` explains the observation given the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingClassifier {
    pub net: Network,
}

pub fn grounding_input(x: &Observation, goal: &GoalSpec, cands: &[SubgoalSpec]) -> Vec<f64> {
    let mut v = Vec::with_capacity(GROUNDING_INPUT_DIM);
    v.extend_from_slice(&x.0);
    v.extend_from_slice(&goal.encode());
    for c in cands {
        v.extend_from_slice(&c.encode());
    }
    v
}

/// Argmax with ties resolved toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl GroundingClassifier {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        Self {
            net: Network::mlp(GROUNDING_INPUT_DIM, hidden, M, seed),
        }
    }

    pub fn logits(&self, x: &Observation, cands: &CandidateSet) -> Result<Vec<f64>, TaskError> {
        if cands.len() != M {
            return Err(TaskError::BadCandidates(format!("expected {M} candidates, got {}", cands.len())));
        }
        let input = grounding_input(x, &cands.goal, &cands.candidates);
        Ok(self.net.forward(&Tensor::vector(&input))?.into_data())
    }

    /// `log softmax` of the logits: the classifier's estimate of which
    /// candidate produced `x`.
    pub fn log_probs(&self, x: &Observation, cands: &CandidateSet) -> Result<Vec<f64>, TaskError> {
        Ok(log_softmax(&self.logits(x, cands)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            role: GROUNDING_ROLE.into(),
            meta: vec![("m".into(), M as f64)],
            network: self.net.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TaskError> {
        if ck.role != GROUNDING_ROLE || ck.network.input_dim() != GROUNDING_INPUT_DIM || ck.network.output_dim() != M {
            return Err(TaskError::Incompatible(format!(
                "expected a grounding checkpoint with {M} outputs, got role {:?}",
                ck.role
            )));
        }
        Ok(Self {
            net: ck.network.clone(),
        })
    }
}

/// Highest-logit candidate and the logits.
pub fn select_subgoal(
    clf: &GroundingClassifier,
    x: &Observation,
    cands: &CandidateSet,
) -> Result<(usize, Vec<f64>), TaskError> {
    let logits = clf.logits(x, cands)?;
    Ok((argmax(&logits), logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundingTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub hidden: [usize; 3],
    /// Shuffle candidate slots (and the label with them) per example.
    pub permute: bool,
    pub seed: u64,
}

impl Default for GroundingTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            weight_decay: 1e-6,
            batch: 256,
            hidden: [512, 256, 128],
            permute: true,
            seed: 0,
        }
    }
}

/// Softmax cross-entropy on the index of the executed candidate.
pub fn train_grounding(
    data: &[ClassifyRecord],
    cfg: &GroundingTrainConfig,
) -> Result<(GroundingClassifier, Vec<f64>), TaskError> {
    if data.is_empty() {
        return Err(TaskError::EmptyDataset);
    }
    if let Some(r) = data.iter().find(|r| r.candidates.len() != M || r.label >= M) {
        return Err(TaskError::BadCandidates(format!(
            "record with {} candidates and label {}",
            r.candidates.len(),
            r.label
        )));
    }
    let mut clf = GroundingClassifier::new(&cfg.hidden, cfg.seed);
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch: cfg.batch,
        optim: AdamWParams::new(cfg.lr, cfg.weight_decay),
        seed: cfg.seed ^ 0x9a0d,
    };
    let history = fit(
        &mut clf.net,
        data.len(),
        &opts,
        |idx, rng| {
            let mut rows = Vec::with_capacity(idx.len() * GROUNDING_INPUT_DIM);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                let r = &data[i];
                let mut perm: Vec<usize> = (0..M).collect();
                if cfg.permute {
                    perm.shuffle(rng);
                }
                let cands: Vec<SubgoalSpec> = perm.iter().map(|&p| r.candidates[p]).collect();
                rows.extend(grounding_input(&r.obs, &r.goal, &cands));
                labels.push(perm.iter().position(|&p| p == r.label).expect("permutation"));
            }
            (Tensor::new(vec![idx.len(), GROUNDING_INPUT_DIM], rows).expect("sized"), labels)
        },
        |out, labels| softmax_cross_entropy(out, labels),
    )?;
    crate::nn::train::warn_if_not_decreasing("grounding", &history);
    Ok((clf, history))
}

/// Fraction of records whose selected candidate is a valid next subgoal, and
/// the fraction that matches the executed candidate exactly.
pub fn grounding_accuracy(clf: &GroundingClassifier, data: &[ClassifyRecord]) -> Result<(f64, f64), TaskError> {
    if data.is_empty() {
        return Err(TaskError::EmptyDataset);
    }
    let rows: Vec<Vec<f64>> = data.iter().map(|r| grounding_input(&r.obs, &r.goal, &r.candidates)).collect();
    let out = clf.net.forward(&Tensor::from_rows(&rows)?)?;
    let (mut valid, mut exact) = (0usize, 0usize);
    for (r, logits) in data.iter().zip(out.data().chunks(M)) {
        let j = argmax(logits);
        valid += r.valid[j] as usize;
        exact += (j == r.label) as usize;
    }
    let n = data.len() as f64;
    Ok((valid as f64 / n, exact as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EntityColor;
    use crate::task::propose_candidates;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_classifier() -> GroundingClassifier {
        let mut clf = GroundingClassifier::new(&[8], 0);
        for p in clf.net.param_slices_mut() {
            p.fill(0.0);
        }
        clf
    }

    fn some_set() -> (Observation, CandidateSet) {
        use EntityColor::*;
        let goal = GoalSpec::new([Red, Green, Blue]).unwrap();
        let cands = propose_candidates(&goal, &mut ChaCha8Rng::seed_from_u64(1));
        (Observation(vec![0.5; OBS_DIM]), cands)
    }

    #[test]
    fn zero_weights_pick_first_slot() {
        let (x, c) = some_set();
        let (i, logits) = select_subgoal(&zero_classifier(), &x, &c).unwrap();
        assert_eq!(i, 0);
        assert!(logits.iter().all(|&l| l == 0.0));
    }

    proptest! {
        #[test]
        fn argmax_shift_invariant(v in proptest::collection::vec(-5.0f64..5.0, M), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            // Shifting can merge nearly tied values through rounding; require a clear winner.
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(sorted[0] - sorted[1] > 1e-9);
            prop_assert_eq!(argmax(&v), argmax(&shifted));
        }
    }

    #[test]
    fn degenerate_constant_problem_is_learned_quickly() {
        let (x, c) = some_set();
        let rec = ClassifyRecord {
            obs: x,
            goal: c.goal,
            candidates: c.candidates.clone(),
            label: 0,
            valid: vec![true, false, false, false, false, false],
        };
        let data = vec![rec; 64];
        let cfg = GroundingTrainConfig {
            epochs: 5,
            permute: false,
            batch: 16,
            hidden: [32, 16, 8],
            ..GroundingTrainConfig::default()
        };
        let (clf, _) = train_grounding(&data, &cfg).unwrap();
        assert_eq!(grounding_accuracy(&clf, &data).unwrap().1, 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            train_grounding(&[], &GroundingTrainConfig::default()),
            Err(TaskError::EmptyDataset)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let clf = GroundingClassifier::new(&[16, 8, 4], 2);
        let ck = Checkpoint::from_bytes(&clf.to_checkpoint().to_bytes()).unwrap();
        assert_eq!(GroundingClassifier::from_checkpoint(&ck).unwrap(), clf);
    }
}
