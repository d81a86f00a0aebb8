use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{axpy, dot, Tensor};
use super::NnError;

const ROW_BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` stored as `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    fn forward_into(&self, x: &[f64], rows: usize, out: &mut [f64]) {
        let (din, dout) = (self.fan_in(), self.fan_out());
        let w = self.weight.data();
        for r in 0..rows {
            out[r * dout..(r + 1) * dout].copy_from_slice(self.bias.data());
        }
        // Per-element accumulation order is bias, then i ascending, whatever the row count.
        for rb in (0..rows).step_by(ROW_BLOCK) {
            let re = (rb + ROW_BLOCK).min(rows);
            for i in 0..din {
                let wrow = &w[i * dout..(i + 1) * dout];
                for r in rb..re {
                    let a = x[r * din + i];
                    if a != 0.0 {
                        axpy(&mut out[r * dout..(r + 1) * dout], a, wrow);
                    }
                }
            }
        }
        if self.activation == Activation::Relu {
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    seed: u64,
}

/// Activations recorded during a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Parameter gradients laid out exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Tensor::zeros(l.weight.shape().to_vec()),
                        Tensor::zeros(l.bias.shape().to_vec()),
                    )
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.data(), b.data()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.data_mut(), b.data_mut()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Network {
    /// ReLU hidden layers, identity output, Glorot-uniform weights and zero biases.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fi, fo) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                let w: Vec<f64> = (0..fi * fo)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fi, fo], w).expect("sized"),
                    bias: Tensor::zeros(vec![fo]),
                    activation: if l + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self { layers, seed }
    }

    pub fn from_layers(layers: Vec<Dense>, seed: u64) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::ShapeMismatch {
                expected: "at least one layer".into(),
                actual: "none".into(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weight.shape().len() != 2 || layer.bias.shape() != [layer.fan_out()] {
                return Err(NnError::ShapeMismatch {
                    expected: format!("layer {l}: weight [in, out] and bias [out]"),
                    actual: format!("{:?} / {:?}", layer.weight.shape(), layer.bias.shape()),
                });
            }
            if l > 0 && layers[l - 1].fan_out() != layer.fan_in() {
                return Err(NnError::ShapeMismatch {
                    expected: format!("layer {l} fan_in {}", layers[l - 1].fan_out()),
                    actual: format!("{}", layer.fan_in()),
                });
            }
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.data_mut()])
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.cols() != self.input_dim() || input.shape().is_empty() {
            return Err(NnError::ShapeMismatch {
                expected: format!("[_, {}]", self.input_dim()),
                actual: format!("{:?}", input.shape()),
            });
        }
        Ok(())
    }

    fn output_shape(&self, input: &Tensor) -> Vec<usize> {
        let mut shape = input.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = self.output_dim();
        shape
    }

    /// Forward pass on a `[rows, in]` (or `[in]`) input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(input)?;
        let rows = input.rows();
        let mut cur = input.data().to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; rows * layer.fan_out()];
            layer.forward_into(&cur, rows, &mut next);
            cur = next;
        }
        Tensor::new(self.output_shape(input), cur)
    }

    /// Forward pass that keeps every layer's activations for [`Network::backward`].
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        self.check_input(input)?;
        let rows = input.rows();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.data().to_vec());
        for layer in &self.layers {
            let mut next = vec![0.0; rows * layer.fan_out()];
            layer.forward_into(acts.last().expect("input pushed"), rows, &mut next);
            acts.push(next);
        }
        Ok(Trace { rows, acts })
    }

    /// Reverse-mode pass returning parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, upstream: &Tensor) -> Result<(Gradients, Tensor), NnError> {
        let (grads, input_grad) = self.backward_impl(trace, upstream, true)?;
        let input_grad = input_grad.expect("requested");
        let mut shape = upstream.shape().to_vec();
        *shape.last_mut().expect("non-empty") = self.input_dim();
        Ok((grads, Tensor::new(shape, input_grad)?))
    }

    /// Like [`Network::backward`] but skips the input gradient.
    pub fn backward_params(&self, trace: &Trace, upstream: &Tensor) -> Result<Gradients, NnError> {
        Ok(self.backward_impl(trace, upstream, false)?.0)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        upstream: &Tensor,
        want_input: bool,
    ) -> Result<(Gradients, Option<Vec<f64>>), NnError> {
        let rows = trace.rows;
        if upstream.cols() != self.output_dim() || upstream.rows() != rows {
            return Err(NnError::ShapeMismatch {
                expected: format!("[{rows}, {}]", self.output_dim()),
                actual: format!("{:?}", upstream.shape()),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.data().to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (din, dout) = (layer.fan_in(), layer.fan_out());
            let out = &trace.acts[l + 1];
            if layer.activation == Activation::Relu {
                for (d, o) in delta.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.acts[l];
            let (gw, gb) = &mut grads.layers[l];
            let gw = gw.data_mut();
            for i in 0..din {
                let grow = &mut gw[i * dout..(i + 1) * dout];
                for r in 0..rows {
                    let a = x[r * din + i];
                    if a != 0.0 {
                        axpy(grow, a, &delta[r * dout..(r + 1) * dout]);
                    }
                }
            }
            let gb = gb.data_mut();
            for r in 0..rows {
                axpy(gb, 1.0, &delta[r * dout..(r + 1) * dout]);
            }
            if l == 0 && !want_input {
                break;
            }
            let w = layer.weight.data();
            let mut prev = vec![0.0; rows * din];
            for rb in (0..rows).step_by(ROW_BLOCK) {
                let re = (rb + ROW_BLOCK).min(rows);
                for i in 0..din {
                    let wrow = &w[i * dout..(i + 1) * dout];
                    for r in rb..re {
                        prev[r * din + i] = dot(&delta[r * dout..(r + 1) * dout], wrow);
                    }
                }
            }
            delta = prev;
        }
        Ok((grads, want_input.then_some(delta)))
    }
}
