//! Central finite-difference verification of [`Network::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Gradients, Network};
use super::Tensor;

/// Relative error with a small absolute floor so that near-zero pairs compare sanely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Fixed pseudo-random projection `L = sum(c * out)` used as the scalar test loss.
fn projection(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn scalar_loss(net: &Network, input: &Tensor, proj: &[f64]) -> f64 {
    let out = net.forward(input).expect("shape checked by caller");
    out.data().iter().zip(proj).map(|(o, c)| o * c).sum()
}

/// Options for [`grad_check_with`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many randomly chosen parameters; `None` checks all.
    pub max_params: Option<usize>,
    pub seed: u64,
}

/// Largest relative error between the supplied analytic gradients and central
/// differences of `L = sum(c * net(input))`.
pub fn max_gradient_error(
    net: &Network,
    input: &Tensor,
    param_grads: &Gradients,
    input_grad: &Tensor,
    opts: &GradCheckOptions,
) -> f64 {
    let out_len = input.rows() * net.output_dim();
    let proj = projection(out_len, opts.seed);
    let h = opts.h;
    let mut worst: f64 = 0.0;

    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let fp = scalar_loss(net, &x, &proj);
        x.data_mut()[i] = orig - h;
        let fm = scalar_loss(net, &x, &proj);
        x.data_mut()[i] = orig;
        worst = worst.max(relative_error(input_grad.data()[i], (fp - fm) / (2.0 * h)));
    }

    let mut probe = net.clone();
    let grad_slices = param_grads.slices();
    let sizes: Vec<usize> = grad_slices.iter().map(|s| s.len()).collect();
    let total: usize = sizes.iter().sum();
    let picks: Vec<(usize, usize)> = match opts.max_params {
        Some(k) if k < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..k)
                .map(|_| {
                    let mut flat = rng.random_range(0..total);
                    let mut s = 0;
                    while flat >= sizes[s] {
                        flat -= sizes[s];
                        s += 1;
                    }
                    (s, flat)
                })
                .collect()
        }
        _ => sizes
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| (0..n).map(move |j| (s, j)))
            .collect(),
    };
    for (s, j) in picks {
        let orig = probe.param_slices()[s][j];
        probe.param_slices_mut()[s][j] = orig + h;
        let fp = scalar_loss(&probe, input, &proj);
        probe.param_slices_mut()[s][j] = orig - h;
        let fm = scalar_loss(&probe, input, &proj);
        probe.param_slices_mut()[s][j] = orig;
        worst = worst.max(relative_error(grad_slices[s][j], (fp - fm) / (2.0 * h)));
    }
    worst
}

/// Analytic gradients of the projection loss used by the checker.
pub fn analytic_gradients(net: &Network, input: &Tensor, seed: u64) -> (Gradients, Tensor) {
    let proj = projection(input.rows() * net.output_dim(), seed);
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("non-empty") = net.output_dim();
    let upstream = Tensor::new(shape, proj).expect("sized");
    let trace = net.forward_trace(input).expect("shape checked by caller");
    net.backward(&trace, &upstream).expect("shapes consistent")
}

pub fn grad_check_with(net: &Network, input: &Tensor, opts: &GradCheckOptions) -> bool {
    if input.cols() != net.input_dim() || opts.h <= 0.0 {
        return false;
    }
    let (pg, ig) = analytic_gradients(net, input, opts.seed);
    max_gradient_error(net, input, &pg, &ig, opts) < opts.tol
}

/// True iff backward agrees with central differences on every parameter and input.
pub fn grad_check(net: &Network, input: &Tensor, h: f64, tol: f64) -> bool {
    grad_check_with(
        net,
        input,
        &GradCheckOptions {
            h,
            tol,
            max_params: None,
            seed: 0,
        },
    )
}
