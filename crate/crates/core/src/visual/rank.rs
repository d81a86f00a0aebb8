use super::VisualError;
use crate::action::{round_action, InvDynNet};
use crate::env::Observation;

/// `sum_t -||a_t - round(a_t)||^2` with `a_t` the inverse model's raw action
/// for frames `t, t+1`: a fixed-variance Gaussian log-likelihood, up to
/// constants, of the nearest admissible action sequence.
pub fn action_log_likelihood(plan: &[Observation], inv: &InvDynNet) -> Result<f64, VisualError> {
    let raw = inv
        .predict_raw_sequence(plan)
        .map_err(|e| VisualError::Incompatible(e.to_string()))?;
    Ok(raw
        .iter()
        .map(|a| {
            let r = round_action(a);
            -a.iter().zip(&r).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        })
        .sum())
}

/// Index of the plan with the highest action log-likelihood; ties go to the
/// lowest index.
pub fn rank_by_action_likelihood(plans: &[Vec<Observation>], inv: &InvDynNet) -> Result<usize, VisualError> {
    if plans.is_empty() {
        return Err(VisualError::EmptyPlanSet);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in plans.iter().enumerate() {
        let s = action_log_likelihood(p, inv)?;
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ACTION_DIM, OBS_DIM};
    use crate::nn::{Activation, Dense, Network, Tensor};

    /// Inverse model that reads the gripper displacement off the frames and
    /// predicts a grip of exactly one.
    fn displacement_model() -> InvDynNet {
        let mut w = vec![0.0; 2 * OBS_DIM * ACTION_DIM];
        for d in 0..2 {
            w[d * ACTION_DIM + d] = -1.0;
            w[(OBS_DIM + d) * ACTION_DIM + d] = 1.0;
        }
        let layer = Dense {
            weight: Tensor::new(vec![2 * OBS_DIM, ACTION_DIM], w).unwrap(),
            bias: Tensor::vector(&[0.0, 0.0, 1.0]),
            activation: Activation::Identity,
        };
        InvDynNet {
            net: Network::from_layers(vec![layer], 0).unwrap(),
        }
    }

    fn frame(x: f64) -> Observation {
        let mut v = vec![0.0; OBS_DIM];
        v[0] = x;
        Observation(v)
    }

    #[test]
    fn single_plan_is_selected() {
        let inv = displacement_model();
        assert_eq!(rank_by_action_likelihood(&[vec![frame(0.0), frame(0.1)]], &inv).unwrap(), 0);
        assert!(matches!(rank_by_action_likelihood(&[], &inv), Err(VisualError::EmptyPlanSet)));
    }

    #[test]
    fn inadmissible_jump_scores_lower() {
        let inv = displacement_model();
        let good = vec![frame(0.1), frame(0.2), frame(0.3)];
        let bad = vec![frame(0.1), frame(0.5), frame(0.6)];
        let (sg, sb) = (action_log_likelihood(&good, &inv).unwrap(), action_log_likelihood(&bad, &inv).unwrap());
        assert!(sb < sg);
        assert!((sg - 0.0).abs() < 1e-12);
        assert!((sb + 0.2f64.powi(2)).abs() < 1e-12);
        assert_eq!(rank_by_action_likelihood(&[bad, good], &inv).unwrap(), 1);
    }
}
