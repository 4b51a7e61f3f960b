use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::finite_sum::FiniteSumProblem;
use crate::linalg::dot;

/// Sigmoid arguments are clamped to `[-SIGMOID_CLAMP, SIGMOID_CLAMP]`.
pub const SIGMOID_CLAMP: f64 = 500.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: Option<usize>,
}

/// Architecture `(d_1, ..., d_h)` over `d` inputs with a single output.
///
/// Parameters are laid out layer by layer: the `fan_out × fan_in` weight
/// matrix row-major, followed by `fan_out` biases. The no-net case
/// (`hidden` empty) has `d` weights and no bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    input_dim: usize,
    hidden: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::param("input dimension must be positive"));
        }
        if hidden.contains(&0) {
            return Err(Error::param("hidden layer widths must be positive"));
        }
        Ok(Self { input_dim, hidden })
    }

    pub fn no_net(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, Vec::new())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden
    }

    pub fn is_no_net(&self) -> bool {
        self.hidden.is_empty()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(1);
        let with_bias = !self.is_no_net();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    bias: with_bias.then_some(offset + w[0] * w[1]),
                };
                offset += w[0] * w[1] + if with_bias { w[1] } else { 0 };
                layer
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.bias.map_or(0, |_| l.fan_out))
            .sum()
    }

    /// Zero for the no-net model. Layered nets draw weights uniformly from
    /// `±√(6 / (fan_in + fan_out))` and start biases at zero.
    pub fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut x = vec![0.0; self.parameter_count()];
        if self.is_no_net() {
            return x;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for layer in self.layers() {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut x[layer.weights..layer.weights + layer.fan_in * layer.fan_out] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        x
    }
}

/// Per-layer pre-activations and activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct PredictionTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl PredictionTrace {
    pub fn output(&self) -> f64 {
        self.activations.last().map_or(f64::NAN, |a| a[0])
    }
}

fn forward(layers: &[Layer], x: &[f64], a: &[f64]) -> PredictionTrace {
    let mut trace = PredictionTrace::default();
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let input: &[f64] = if l == 0 { a } else { &trace.activations[l - 1] };
        let z: Vec<f64> = (0..layer.fan_out)
            .map(|r| {
                let row =
                    &x[layer.weights + r * layer.fan_in..layer.weights + (r + 1) * layer.fan_in];
                dot(row, input) + layer.bias.map_or(0.0, |b| x[b + r])
            })
            .collect();
        let act = if l == last {
            z.iter().map(|&v| sigmoid(v)).collect()
        } else {
            z.iter().map(|v| v.tanh()).collect()
        };
        trace.pre_activations.push(z);
        trace.activations.push(act);
    }
    trace
}

/// Adds `scale · ∂ out / ∂x` into `grad`, where `out` is the network output
/// recorded in `trace` and `scale` multiplies the output pre-activation
/// derivative.
fn backward(
    layers: &[Layer],
    x: &[f64],
    a: &[f64],
    trace: &PredictionTrace,
    delta_out: f64,
    grad: &mut [f64],
) {
    let mut delta = vec![delta_out];
    for l in (0..layers.len()).rev() {
        let layer = layers[l];
        let input: &[f64] = if l == 0 { a } else { &trace.activations[l - 1] };
        for (r, dr) in delta.iter().enumerate() {
            if *dr == 0.0 {
                continue;
            }
            let row =
                &mut grad[layer.weights + r * layer.fan_in..layer.weights + (r + 1) * layer.fan_in];
            for (g, inp) in row.iter_mut().zip(input) {
                *g += dr * inp;
            }
            if let Some(b) = layer.bias {
                grad[b + r] += dr;
            }
        }
        if l > 0 {
            let below = &trace.activations[l - 1];
            delta = (0..layer.fan_in)
                .map(|c| {
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(r, dr)| dr * x[layer.weights + r * layer.fan_in + c])
                        .sum();
                    back * (1.0 - below[c] * below[c])
                })
                .collect();
        }
    }
}

/// `net(a; x)`.
pub fn predict(spec: &NetworkSpec, x: &[f64], a: &[f64]) -> Result<f64> {
    check_dim(spec.parameter_count(), x.len())?;
    check_dim(spec.input_dim, a.len())?;
    let p = forward(&spec.layers(), x, a).output();
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::Numerical("non-finite network output".into()))
    }
}

/// `(1/N_T) Σ (ȳ_i - net(ā_i; x))^2`.
pub fn testing_loss(spec: &NetworkSpec, x: &[f64], data: &Dataset) -> Result<f64> {
    check_dim(spec.input_dim, data.dim())?;
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sum = 0.0;
    for i in 0..data.len() {
        let r = data.label(i) - predict(spec, x, data.features(i))?;
        sum += r * r;
    }
    Ok(sum / data.len() as f64)
}

/// Fraction of samples where `net(a; x) >= 0.5` agrees with `y = 1`.
pub fn classification_rate(spec: &NetworkSpec, x: &[f64], data: &Dataset) -> Result<f64> {
    check_dim(spec.input_dim, data.dim())?;
    if data.is_empty() {
        return Err(Error::UndefinedRate);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let predicted_one = predict(spec, x, data.features(i))? >= 0.5;
        if predicted_one == (data.label(i) == 1.0) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Square loss of a [`NetworkSpec`] predictor over a training set.
#[derive(Debug, Clone)]
pub struct NetworkProblem {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    n: usize,
    data: Arc<Dataset>,
}

impl NetworkProblem {
    pub fn new(spec: NetworkSpec, data: Arc<Dataset>) -> Result<Self> {
        check_dim(spec.input_dim, data.dim())?;
        if data.is_empty() {
            return Err(Error::EmptySample);
        }
        let layers = spec.layers();
        let n = spec.parameter_count();
        Ok(Self {
            spec,
            layers,
            n,
            data,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn trace(&self, i: usize, x: &[f64]) -> PredictionTrace {
        forward(&self.layers, x, self.data.features(i))
    }
}

impl FiniteSumProblem for NetworkProblem {
    fn dim(&self) -> usize {
        self.n
    }

    fn num_components(&self) -> usize {
        self.data.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.data.features(i);
        let p = if self.spec.is_no_net() {
            sigmoid(dot(a, x))
        } else {
            forward(&self.layers, x, a).output()
        };
        let r = self.data.label(i) - p;
        r * r
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let a = self.data.features(i);
        let y = self.data.label(i);
        if self.spec.is_no_net() {
            let p = sigmoid(dot(a, x));
            let c = -2.0 * (y - p) * p * (1.0 - p);
            if c != 0.0 {
                for (o, ai) in out.iter_mut().zip(a) {
                    *o += c * ai;
                }
            }
            return;
        }
        let trace = forward(&self.layers, x, a);
        let p = trace.output();
        let delta_out = -2.0 * (y - p) * p * (1.0 - p);
        if delta_out != 0.0 {
            backward(&self.layers, x, a, &trace, delta_out, out);
        }
    }
}
