//! Fully connected ReLU network with softmax cross-entropy and SGD.

use serde::{Deserialize, Serialize};

use super::rng::DeskRng;
use super::TrainError;
use crate::snapshot::{TensorData, TensorSnapshot};

/// One affine layer. `weight` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }
}

/// Parameters of the network; also used for gradients and velocity buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<Dense>,
}

pub type Gradients = ModelState;

impl ModelState {
    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn he_normal(widths: &[usize], rng: &mut DeskRng) -> Self {
        let mut model = Self::zeros(widths);
        for layer in &mut model.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            layer.weight.iter_mut().for_each(|w| *w = rng.normal(0.0, std));
        }
        model
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn same_shape(&self, other: &ModelState) -> bool {
        self.layers.len() == other.layers.len() && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Parameters named `fc{i}.weight` / `fc{i}.bias`, 1-based, as F64 tensors.
    pub fn to_snapshot(&self) -> TensorSnapshot {
        let mut snapshot = TensorSnapshot::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let weight = TensorData::from_f64(vec![layer.outputs, layer.inputs], layer.weight.clone())
                .expect("weight length matches its shape");
            let bias = TensorData::from_f64(vec![layer.outputs], layer.bias.clone()).expect("bias length matches");
            snapshot
                .insert(format!("fc{}.weight", i + 1), weight)
                .expect("layer names are unique");
            snapshot
                .insert(format!("fc{}.bias", i + 1), bias)
                .expect("layer names are unique");
        }
        snapshot
    }
}

fn check_batch(model: &ModelState, features: &[f64], width: usize) -> Result<usize, TrainError> {
    if width != model.input_width() || width == 0 || !features.len().is_multiple_of(width) {
        return Err(TrainError::ShapeMismatch(format!(
            "batch of {} values with width {width} does not fit input width {}",
            features.len(),
            model.input_width()
        )));
    }
    Ok(features.len() / width)
}

/// Activations of every layer: index 0 is the input, the last entry holds logits.
fn forward_trace(model: &ModelState, features: &[f64], rows: usize) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(model.layers.len() + 1);
    trace.push(features.to_vec());
    let last = model.layers.len() - 1;
    for (index, layer) in model.layers.iter().enumerate() {
        let input = trace.last().expect("trace starts with the input");
        let mut out = vec![0.0; rows * layer.outputs];
        for r in 0..rows {
            let x = &input[r * layer.inputs..(r + 1) * layer.inputs];
            for o in 0..layer.outputs {
                let w = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                let z = layer.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                out[r * layer.outputs + o] = if index < last { z.max(0.0) } else { z };
            }
        }
        trace.push(out);
    }
    trace
}

/// Logits (`rows × classes`) for a row-major batch of `width`-wide samples.
pub fn forward(model: &ModelState, features: &[f64], width: usize) -> Result<Vec<f64>, TrainError> {
    let rows = check_batch(model, features, width)?;
    Ok(forward_trace(model, features, rows).pop().unwrap_or_default())
}

/// `log(sum(exp(z)))` split as `(max, log1p(sum over the rest of exp(z - max)))`,
/// so callers can subtract a logit from `max` before adding the small tail.
fn log_sum_exp(z: &[f64]) -> (f64, f64) {
    let (arg, max) = z
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    (max, rest.ln_1p())
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_grads(
    model: &ModelState,
    features: &[f64],
    width: usize,
    labels: &[usize],
) -> Result<(f64, Gradients), TrainError> {
    let rows = check_batch(model, features, width)?;
    if rows == 0 {
        return Err(TrainError::EmptyBatch);
    }
    if rows != labels.len() {
        return Err(TrainError::ShapeMismatch(format!("{rows} samples but {} labels", labels.len())));
    }
    let classes = model.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelOutOfRange { label: bad, classes });
    }

    let trace = forward_trace(model, features, rows);
    let logits = &trace[trace.len() - 1];
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    // d loss / d logits
    let mut delta = vec![0.0; rows * classes];
    for r in 0..rows {
        let z = &logits[r * classes..(r + 1) * classes];
        let (max, tail) = log_sum_exp(z);
        loss += (max - z[labels[r]]) + tail;
        for (c, d) in delta[r * classes..(r + 1) * classes].iter_mut().enumerate() {
            let p = ((z[c] - max) - tail).exp();
            let target = if c == labels[r] { 1.0 } else { 0.0 };
            *d = (p - target) * scale;
        }
    }
    loss *= scale;

    let mut grads = model.zeros_like();
    for (index, (layer, grad)) in model.layers.iter().zip(&mut grads.layers).enumerate().rev() {
        let input = &trace[index];
        for r in 0..rows {
            let x = &input[r * layer.inputs..(r + 1) * layer.inputs];
            let d = &delta[r * layer.outputs..(r + 1) * layer.outputs];
            for (o, &dz) in d.iter().enumerate() {
                grad.bias[o] += dz;
                let gw = &mut grad.weight[o * layer.inputs..(o + 1) * layer.inputs];
                gw.iter_mut().zip(x).for_each(|(g, &xi)| *g += dz * xi);
            }
        }
        if index == 0 {
            break;
        }
        let mut upstream = vec![0.0; rows * layer.inputs];
        for r in 0..rows {
            let d = &delta[r * layer.outputs..(r + 1) * layer.outputs];
            let up = &mut upstream[r * layer.inputs..(r + 1) * layer.inputs];
            for (o, &dz) in d.iter().enumerate() {
                let w = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                up.iter_mut().zip(w).for_each(|(u, &wi)| *u += wi * dz);
            }
            // ReLU gate: the input to this layer is the previous layer's output.
            let activation = &input[r * layer.inputs..(r + 1) * layer.inputs];
            up.iter_mut()
                .zip(activation)
                .filter(|(_, &a)| a <= 0.0)
                .for_each(|(u, _)| *u = 0.0);
        }
        delta = upstream;
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Velocity buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ModelState,
}

impl OptimizerState {
    pub fn new(model: &ModelState) -> Self {
        Self {
            velocity: model.zeros_like(),
        }
    }
}

/// One SGD update: `g' = g + λw` (weights only), `v = μv + g'`, `w -= ηv`.
pub fn sgd_step(
    model: &mut ModelState,
    optimizer: &mut OptimizerState,
    grads: &Gradients,
    config: SgdConfig,
) -> Result<(), TrainError> {
    if !model.same_shape(grads) || !model.same_shape(&optimizer.velocity) {
        return Err(TrainError::ShapeMismatch("model, gradients and velocity disagree".into()));
    }
    let SgdConfig {
        lr,
        momentum,
        weight_decay,
    } = config;
    for ((layer, grad), vel) in model
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut optimizer.velocity.layers)
    {
        for ((w, &g), v) in layer.weight.iter_mut().zip(&grad.weight).zip(&mut vel.weight) {
            *v = momentum * *v + (g + weight_decay * *w);
            *w -= lr * *v;
        }
        for ((b, &g), v) in layer.bias.iter_mut().zip(&grad.bias).zip(&mut vel.bias) {
            *v = momentum * *v + g;
            *b -= lr * *v;
        }
    }
    Ok(())
}

/// Mean loss and accuracy over a whole dataset.
pub fn evaluate(model: &ModelState, features: &[f64], width: usize, labels: &[usize]) -> Result<(f64, f64), TrainError> {
    let (loss, _) = loss_and_grads(model, features, width, labels)?;
    let logits = forward(model, features, width)?;
    let classes = model.classes();
    let correct = logits
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(z, &label)| {
            let predicted = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            predicted == label
        })
        .count();
    Ok((loss, correct as f64 / labels.len() as f64))
}
