//! Scalar training losses. Each returns the batch-mean loss together with the
//! gradient of that mean with respect to the predictions.

use super::{NnError, Tensor};

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        });
    }
    Ok(())
}

/// Numerically stable `log(sum(exp(row)))`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|v| v - lse).collect()
}

/// Softmax cross-entropy over the rows of `logits` with integer class labels.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let (rows, classes) = (logits.rows(), logits.cols());
    if labels.len() != rows {
        return Err(NnError::ShapeMismatch {
            expected: format!("{rows} labels"),
            actual: format!("{}", labels.len()),
        });
    }
    let mut grad = Tensor::zeros(logits.shape().to_vec());
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(NnError::ShapeMismatch {
                expected: format!("label < {classes}"),
                actual: format!("{label}"),
            });
        }
        let lp = log_softmax(logits.row(r));
        loss -= lp[label];
        let g = grad.row_mut(r);
        for (c, gv) in g.iter_mut().enumerate() {
            *gv = lp[c].exp() / rows as f64;
        }
        g[label] -= 1.0 / rows as f64;
    }
    Ok((loss / rows as f64, grad))
}

/// `log(sigmoid(z))` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on raw logits (one logit per row) against targets in `[0, 1]`.
pub fn bce_with_logits(logits: &Tensor, targets: &[f64]) -> Result<(f64, Tensor), NnError> {
    if logits.len() != targets.len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{} targets", logits.len()),
            actual: format!("{}", targets.len()),
        });
    }
    let n = targets.len() as f64;
    let mut grad = Tensor::zeros(logits.shape().to_vec());
    let mut loss = 0.0;
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets) {
        loss -= y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z);
        *g = (sigmoid(z) - y) / n;
    }
    Ok((loss / n, grad))
}

/// Mean over every element of the squared error.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Squared error summed within each row, averaged over rows: `mean_r ||p_r - t_r||^2`.
pub fn row_sum_squared_error(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    same_shape(pred, target)?;
    let rows = pred.rows() as f64;
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / rows;
    }
    Ok((loss / rows, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_log_m() {
        let logits = Tensor::from_rows(&[vec![0.0; 6]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let (loss, grad) = bce_with_logits(&Tensor::vector(&[0.0]), &[1.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!((grad.data()[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn row_sum_squared_error_of_zero_predictor() {
        let target = Tensor::from_rows(&[vec![1.0, -1.0, 2.0], vec![0.0, 3.0, 0.0]]).unwrap();
        let pred = Tensor::zeros(vec![2, 3]);
        let (loss, _) = row_sum_squared_error(&pred, &target).unwrap();
        assert!((loss - (6.0 + 9.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let logits = Tensor::from_rows(&[vec![0.0; 3]]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[3]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_ce_is_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 6),
            label in 0usize..6,
            shift in -50.0f64..50.0,
        ) {
            let a = Tensor::from_rows(std::slice::from_ref(&logits)).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let b = Tensor::from_rows(&[shifted]).unwrap();
            let (la, ga) = softmax_cross_entropy(&a, &[label]).unwrap();
            let (lb, gb) = softmax_cross_entropy(&b, &[label]).unwrap();
            prop_assert!((la - lb).abs() < 1e-10);
            for (x, y) in ga.data().iter().zip(gb.data()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn bce_gradient_matches_finite_difference(z in -8.0f64..8.0, y in 0.0f64..=1.0) {
            let h = 1e-6;
            let f = |z: f64| bce_with_logits(&Tensor::vector(&[z]), &[y]).unwrap().0;
            let (_, g) = bce_with_logits(&Tensor::vector(&[z]), &[y]).unwrap();
            let fd = (f(z + h) - f(z - h)) / (2.0 * h);
            prop_assert!((g.data()[0] - fd).abs() < 1e-6);
        }
    }
}
