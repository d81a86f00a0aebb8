use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::InvDynNet;
use crate::nn::gradcheck::{analytic_gradients, max_gradient_error, relative_error};
use crate::nn::{GradCheckOptions, Network, Tensor};
use crate::task::GroundingClassifier;
use crate::visual::{DenoiserNet, FeasibilityClassifier, Parameterization, ScheduleParams};

/// Outcome of one architecture's finite-difference check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCase {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn random_input(cols: usize, rows: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
}

fn check_network(name: &str, net: &Network, max_params: Option<usize>, h: f64, tol: f64, seed: u64) -> GradientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_input(net.input_dim(), 2, &mut rng);
    let opts = GradCheckOptions { h, tol, max_params, seed };
    let (pg, ig) = analytic_gradients(net, &input, seed);
    let err = max_gradient_error(net, &input, &pg, &ig, &opts);
    GradientCase {
        name: name.to_string(),
        max_rel_error: err,
        passed: err < tol,
    }
}

/// `d log sigmoid(logit(tau)) / d tau` against central differences on every coordinate.
pub fn check_feasibility_input_gradient(clf: &FeasibilityClassifier, h: f64, tol: f64, seed: u64) -> GradientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau: Vec<f64> = (0..clf.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = clf.grad_log_prob(&tau).expect("sized");
    let mut worst: f64 = 0.0;
    let mut probe = tau.clone();
    for i in 0..tau.len() {
        probe[i] = tau[i] + h;
        let fp = clf.log_prob(&probe).expect("sized");
        probe[i] = tau[i] - h;
        let fm = clf.log_prob(&probe).expect("sized");
        probe[i] = tau[i];
        worst = worst.max(relative_error(g[i], (fp - fm) / (2.0 * h)));
    }
    GradientCase {
        name: "feasibility input gradient of log g".into(),
        max_rel_error: worst,
        passed: worst < tol,
    }
}

/// Finite-difference checks for every network shape used by the planners at
/// their default sizes. Small networks are checked on every parameter; for
/// the large ones `sampled_params` randomly drawn parameters plus every input
/// coordinate are checked.
pub fn gradient_suite(h: f64, tol: f64, sampled_params: usize) -> Vec<GradientCase> {
    let sampled = Some(sampled_params);
    let den = DenoiserNet::new(12, &[512, 512], Parameterization::Sample, ScheduleParams::default(), 11);
    let feas = FeasibilityClassifier::new(12, &[256, 128], 12);
    vec![
        check_network("grounding classifier", &GroundingClassifier::new(&[512, 256, 128], 10).net, sampled, h, tol, 1),
        check_network("denoiser", &den.net, sampled, h, tol, 2),
        check_network("feasibility classifier", &feas.net, sampled, h, tol, 3),
        check_feasibility_input_gradient(&feas, h, tol, 4),
        check_network("inverse dynamics", &InvDynNet::new(&[256, 128], 13).net, sampled, h, tol, 5),
        check_network("density-ratio classifier", &Network::mlp(2, &[32, 32], 3, 14), None, h, tol, 6),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample_of_the_suite_passes() {
        for case in gradient_suite(1e-5, 1e-4, 20) {
            assert!(case.passed, "{} max rel error {}", case.name, case.max_rel_error);
        }
    }
}
