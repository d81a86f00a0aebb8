//! Action planning: an inverse-dynamics regressor from consecutive
//! observations to the action that connects them.

use serde::{Deserialize, Serialize};

use crate::env::{Action, InvRecord, Observation, ACTION_DIM, GRIP_THRESHOLD, MAX_DELTA, OBS_DIM};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::mse;
use crate::nn::{fit, AdamWParams, FitOptions, Network, NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ActionError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub const INVERSE_ROLE: &str = "inverse";

/// `p(a_t | x_t, x_{t+1})` as a deterministic regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct InvDynNet {
    pub net: Network,
}

fn pair_input(x: &[f64], x_next: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * OBS_DIM);
    v.extend_from_slice(x);
    v.extend_from_slice(x_next);
    v
}

/// Clamps the deltas to the action box and snaps the grip to 0 or 1.
pub fn round_action(raw: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    [
        raw[0].clamp(-MAX_DELTA, MAX_DELTA),
        raw[1].clamp(-MAX_DELTA, MAX_DELTA),
        if raw[2] >= GRIP_THRESHOLD { 1.0 } else { 0.0 },
    ]
}

impl InvDynNet {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        Self {
            net: Network::mlp(2 * OBS_DIM, hidden, ACTION_DIM, seed),
        }
    }

    /// Unprocessed network output.
    pub fn predict_raw(&self, x: &Observation, x_next: &Observation) -> Result<[f64; ACTION_DIM], ActionError> {
        let out = self.net.forward(&Tensor::vector(&pair_input(&x.0, &x_next.0)))?;
        let d = out.data();
        Ok([d[0], d[1], d[2]])
    }

    /// Raw outputs for every consecutive pair of `frames`.
    pub fn predict_raw_sequence(&self, frames: &[Observation]) -> Result<Vec<[f64; ACTION_DIM]>, ActionError> {
        if frames.len() < 2 {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<f64>> = frames.windows(2).map(|w| pair_input(&w[0].0, &w[1].0)).collect();
        let out = self.net.forward(&Tensor::from_rows(&rows)?)?;
        Ok(out.data().chunks(ACTION_DIM).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn predict_action(&self, x: &Observation, x_next: &Observation) -> Result<Action, ActionError> {
        Ok(Action(round_action(&self.predict_raw(x, x_next)?)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            role: INVERSE_ROLE.into(),
            meta: vec![],
            network: self.net.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ActionError> {
        if ck.role != INVERSE_ROLE || ck.network.input_dim() != 2 * OBS_DIM || ck.network.output_dim() != ACTION_DIM {
            return Err(ActionError::Incompatible(format!(
                "expected an inverse-dynamics checkpoint, got role {:?}",
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
pub struct InverseTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub hidden: [usize; 2],
    pub seed: u64,
}

impl Default for InverseTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-4,
            weight_decay: 0.0,
            batch: 256,
            hidden: [256, 128],
            seed: 0,
        }
    }
}

/// `(x_t, x_{t+1}, a_t)` triples from every trajectory.
pub fn unpack_triples(data: &[InvRecord]) -> Vec<(Vec<f64>, [f64; ACTION_DIM])> {
    data.iter()
        .flat_map(|r| {
            r.obs
                .windows(2)
                .zip(&r.acts)
                .map(|(w, a)| (pair_input(&w[0].0, &w[1].0), a.0))
        })
        .collect()
}

/// Mean-squared-error regression onto the expert actions.
pub fn train_inverse(data: &[InvRecord], cfg: &InverseTrainConfig) -> Result<(InvDynNet, Vec<f64>), ActionError> {
    let triples = unpack_triples(data);
    if triples.is_empty() {
        return Err(ActionError::EmptyDataset);
    }
    let mut inv = InvDynNet::new(&cfg.hidden, cfg.seed);
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch: cfg.batch,
        optim: AdamWParams::new(cfg.lr, cfg.weight_decay),
        seed: cfg.seed ^ 0x1d,
    };
    let history = fit(
        &mut inv.net,
        triples.len(),
        &opts,
        |idx, _| {
            let x: Vec<&[f64]> = idx.iter().map(|&i| triples[i].0.as_slice()).collect();
            let y: Vec<[f64; ACTION_DIM]> = idx.iter().map(|&i| triples[i].1).collect();
            (Tensor::from_rows(&x).expect("sized"), Tensor::from_rows(&y).expect("sized"))
        },
        mse,
    )?;
    crate::nn::train::warn_if_not_decreasing("inverse", &history);
    Ok((inv, history))
}

/// Mean squared error of raw predictions over all held-out triples.
pub fn action_mse(inv: &InvDynNet, data: &[InvRecord]) -> Result<f64, ActionError> {
    let triples = unpack_triples(data);
    if triples.is_empty() {
        return Err(ActionError::EmptyDataset);
    }
    let x: Vec<&[f64]> = triples.iter().map(|t| t.0.as_slice()).collect();
    let y: Vec<[f64; ACTION_DIM]> = triples.iter().map(|t| t.1).collect();
    let out = inv.net.forward(&Tensor::from_rows(&x)?)?;
    Ok(mse(&out, &Tensor::from_rows(&y)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;

    #[test]
    fn raw_output_is_clamped_and_thresholded() {
        assert_eq!(round_action(&[0.5, -0.5, 0.49]), [0.2, -0.2, 0.0]);
        assert_eq!(round_action(&[0.01, 0.0, 0.5]), [0.01, 0.0, 1.0]);
    }

    #[test]
    fn overfits_one_sample() {
        let obs: Vec<Observation> = (0..2).map(|t| Observation((0..OBS_DIM).map(|i| (i + t) as f64 * 0.01).collect())).collect();
        let rec = InvRecord {
            obs,
            acts: vec![Action::new(0.1, -0.05, 1.0)],
        };
        let cfg = InverseTrainConfig {
            epochs: 300,
            lr: 1e-3,
            ..InverseTrainConfig::default()
        };
        let (inv, _) = train_inverse(std::slice::from_ref(&rec), &cfg).unwrap();
        let mse = action_mse(&inv, &[rec]).unwrap();
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            train_inverse(&[], &InverseTrainConfig::default()),
            Err(ActionError::EmptyDataset)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let inv = InvDynNet::new(&[8, 4], 3);
        let ck = Checkpoint::from_bytes(&inv.to_checkpoint().to_bytes()).unwrap();
        assert_eq!(InvDynNet::from_checkpoint(&ck).unwrap(), inv);
    }

    #[test]
    fn sequence_matches_pairwise() {
        let inv = InvDynNet::new(&[8, 4], 3);
        let frames: Vec<Observation> = (0..4).map(|t| Observation(vec![t as f64 * 0.1; OBS_DIM])).collect();
        let seq = inv.predict_raw_sequence(&frames).unwrap();
        for (t, raw) in seq.iter().enumerate() {
            assert_eq!(*raw, inv.predict_raw(&frames[t], &frames[t + 1]).unwrap());
        }
    }
}
