use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adamw_for, apply_step, AdamWParams, Network, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch: usize,
    pub optim: AdamWParams,
    pub seed: u64,
}

/// Minibatch AdamW over `n` samples. Each epoch visits a fresh permutation;
/// `make_batch` turns sample indices into a network input plus whatever the
/// loss needs, and `loss` maps the network output to `(mean loss, d loss / d output)`.
/// Returns the mean training loss of every epoch.
pub fn fit<B, MB, L>(
    net: &mut Network,
    n: usize,
    opts: &FitOptions,
    mut make_batch: MB,
    mut loss: L,
) -> Result<Vec<f64>, NnError>
where
    MB: FnMut(&[usize], &mut ChaCha8Rng) -> (Tensor, B),
    L: FnMut(&Tensor, &B) -> Result<(f64, Tensor), NnError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = adamw_for(net, opts.optim);
    let batch = opts.batch.clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (input, aux) = make_batch(chunk, &mut rng);
            let trace = net.forward_trace(&input)?;
            let out = Tensor::new(vec![trace.rows(), net.output_dim()], trace.output().to_vec())?;
            let (l, grad) = loss(&out, &aux)?;
            let grads = net.backward_params(&trace, &grad)?;
            apply_step(&mut opt, net, &grads)?;
            total += l * chunk.len() as f64;
        }
        history.push(total / n.max(1) as f64);
    }
    Ok(history)
}

/// Logs a warning when the last five-epoch window ends higher than it began
/// by more than 1%, which usually means the learning rate is too high.
pub fn warn_if_not_decreasing(name: &str, history: &[f64]) {
    if let Some(w) = history.windows(5).last() {
        if w[4] > w[0] * 1.01 {
            log::warn!("{name}: training loss rose from {:.5} to {:.5} over the last five epochs", w[0], w[4]);
        }
    }
}
