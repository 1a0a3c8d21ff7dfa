//! Recurrent sequence classifier: stacked MLP / LSTM / BLSTM layers under a
//! softmax output, with exact backpropagation through time.

mod lstm;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use lstm::{lstm_sequence, lstm_step, BackpropFault, Gate, LstmParams, LstmTrace, StepCache};

use crate::error::{Error, Result};

/// Probability clamp inside the loss.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Mlp,
    Lstm,
    Blstm,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Mlp => "mlp",
            LayerKind::Lstm => "lstm",
            LayerKind::Blstm => "blstm",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(LayerKind::Mlp),
            "lstm" => Ok(LayerKind::Lstm),
            "blstm" => Ok(LayerKind::Blstm),
            other => Err(format!("unknown hidden type {other:?} (expected mlp, lstm or blstm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub units: usize,
}

impl LayerSpec {
    pub fn output_dim(&self) -> usize {
        match self.kind {
            LayerKind::Blstm => 2 * self.units,
            _ => self.units,
        }
    }
}

/// Architecture without parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl NetShape {
    /// `depth` identical hidden layers.
    pub fn uniform(input_dim: usize, kind: LayerKind, depth: usize, units: usize, num_classes: usize) -> Self {
        NetShape {
            input_dim,
            layers: vec![LayerSpec { kind, units }; depth],
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("network input dimension must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        if self.layers.iter().any(|l| l.units == 0) {
            return Err(Error::Config("hidden layers need at least one unit".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("at least two output classes are required".into()));
        }
        Ok(())
    }
}

/// Affine map `W x + b`, `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Per-timestep `tanh(W x + b)`, no recurrence.
    Mlp(Dense),
    Lstm(LstmParams),
    /// Output per step is `[forward h | backward h]`.
    Blstm {
        forward: LstmParams,
        backward: LstmParams,
    },
}

impl Layer {
    pub fn zeros(input: usize, spec: LayerSpec) -> Self {
        match spec.kind {
            LayerKind::Mlp => Layer::Mlp(Dense::zeros(input, spec.units)),
            LayerKind::Lstm => Layer::Lstm(LstmParams::zeros(input, spec.units)),
            LayerKind::Blstm => Layer::Blstm {
                forward: LstmParams::zeros(input, spec.units),
                backward: LstmParams::zeros(input, spec.units),
            },
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Mlp(d) => LayerSpec { kind: LayerKind::Mlp, units: d.weight.nrows() },
            Layer::Lstm(p) => LayerSpec { kind: LayerKind::Lstm, units: p.hidden() },
            Layer::Blstm { forward, .. } => LayerSpec {
                kind: LayerKind::Blstm,
                units: forward.hidden(),
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Mlp(d) => d.weight.ncols(),
            Layer::Lstm(p) => p.input(),
            Layer::Blstm { forward, .. } => forward.input(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }
}

/// Whether a parameter tensor is a weight (subject to weight noise) or a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    /// Softmax output layer, `M x last hidden output`.
    pub output: Dense,
}

/// Loss gradients, shaped like the network they belong to.
pub type Gradients = Network;

fn lstm_tensors(p: &LstmParams) -> [(ParamRole, &[f64]); 6] {
    [
        (ParamRole::Weight, p.w_x.as_slice().unwrap()),
        (ParamRole::Weight, p.w_h.as_slice().unwrap()),
        (ParamRole::Weight, p.peep_i.as_slice().unwrap()),
        (ParamRole::Weight, p.peep_f.as_slice().unwrap()),
        (ParamRole::Weight, p.peep_o.as_slice().unwrap()),
        (ParamRole::Bias, p.bias.as_slice().unwrap()),
    ]
}

fn lstm_tensors_mut(p: &mut LstmParams) -> [(ParamRole, &mut [f64]); 6] {
    [
        (ParamRole::Weight, p.w_x.as_slice_mut().unwrap()),
        (ParamRole::Weight, p.w_h.as_slice_mut().unwrap()),
        (ParamRole::Weight, p.peep_i.as_slice_mut().unwrap()),
        (ParamRole::Weight, p.peep_f.as_slice_mut().unwrap()),
        (ParamRole::Weight, p.peep_o.as_slice_mut().unwrap()),
        (ParamRole::Bias, p.bias.as_slice_mut().unwrap()),
    ]
}

impl Network {
    pub fn zeros(shape: &NetShape) -> Result<Self> {
        shape.validate()?;
        let mut input = shape.input_dim;
        let mut layers = Vec::with_capacity(shape.layers.len());
        for spec in &shape.layers {
            layers.push(Layer::zeros(input, *spec));
            input = spec.output_dim();
        }
        Ok(Network {
            layers,
            output: Dense::zeros(input, shape.num_classes),
        })
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            input_dim: self.input_dim(),
            layers: self.layers.iter().map(Layer::spec).collect(),
            num_classes: self.num_classes(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.output.weight.nrows()
    }

    /// Every parameter tensor in canonical order: layers first to last
    /// (LSTM: `w_x, w_h, peep_i, peep_f, peep_o, bias`; BLSTM: forward
    /// direction then backward; MLP: `weight, bias`), then the output layer.
    pub fn tensors(&self) -> Vec<(ParamRole, &[f64])> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Mlp(d) => {
                    out.push((ParamRole::Weight, d.weight.as_slice().unwrap()));
                    out.push((ParamRole::Bias, d.bias.as_slice().unwrap()));
                }
                Layer::Lstm(p) => out.extend(lstm_tensors(p)),
                Layer::Blstm { forward, backward } => {
                    out.extend(lstm_tensors(forward));
                    out.extend(lstm_tensors(backward));
                }
            }
        }
        out.push((ParamRole::Weight, self.output.weight.as_slice().unwrap()));
        out.push((ParamRole::Bias, self.output.bias.as_slice().unwrap()));
        out
    }

    /// Mutable counterpart of [`Network::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(ParamRole, &mut [f64])> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Mlp(d) => {
                    out.push((ParamRole::Weight, d.weight.as_slice_mut().unwrap()));
                    out.push((ParamRole::Bias, d.bias.as_slice_mut().unwrap()));
                }
                Layer::Lstm(p) => out.extend(lstm_tensors_mut(p)),
                Layer::Blstm { forward, backward } => {
                    out.extend(lstm_tensors_mut(forward));
                    out.extend(lstm_tensors_mut(backward));
                }
            }
        }
        out.push((ParamRole::Weight, self.output.weight.as_slice_mut().unwrap()));
        out.push((ParamRole::Bias, self.output.bias.as_slice_mut().unwrap()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters flattened in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::dim("flat parameter vector", self.num_params(), values.len()));
        }
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&values[off..off + t.len()]);
            off += t.len();
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (_, t) in self.tensors() {
            for v in t {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }

    fn check(&self) -> Result<()> {
        let mut input = self.input_dim();
        for layer in &self.layers {
            if layer.input_dim() != input {
                return Err(Error::dim("layer input", input, layer.input_dim()));
            }
            match layer {
                Layer::Mlp(d) => {
                    if d.bias.len() != d.weight.nrows() {
                        return Err(Error::dim("MLP bias", d.weight.nrows(), d.bias.len()));
                    }
                }
                Layer::Lstm(p) => p.check_shapes()?,
                Layer::Blstm { forward, backward } => {
                    forward.check_shapes()?;
                    backward.check_shapes()?;
                    if forward.hidden() != backward.hidden() || forward.input() != backward.input() {
                        return Err(Error::Validation(
                            "BLSTM directions must have identical shapes".into(),
                        ));
                    }
                }
            }
            input = layer.output_dim();
        }
        if self.output.weight.ncols() != input {
            return Err(Error::dim("output layer input", input, self.output.weight.ncols()));
        }
        if self.output.bias.len() != self.num_classes() {
            return Err(Error::dim("output bias", self.num_classes(), self.output.bias.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LayerTrace {
    Mlp,
    Lstm(LstmTrace),
    Blstm(LstmTrace, LstmTrace),
}

/// Activations kept by [`network_forward`] for [`network_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    fingerprint: u64,
    /// `inputs[n]` is the input sequence of layer `n`; the last entry is
    /// the top hidden sequence fed to the output layer.
    inputs: Vec<Array2<f64>>,
    layers: Vec<LayerTrace>,
    /// `T x M` softmax output.
    pub probs: Array2<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    /// Output sequence of hidden layer `n`.
    pub fn layer_output(&self, n: usize) -> &Array2<f64> {
        &self.inputs[n + 1]
    }
}

fn run_layer(layer: &Layer, x: ArrayView2<f64>) -> (Array2<f64>, LayerTrace) {
    match layer {
        Layer::Mlp(d) => (d.affine(x).mapv_into(f64::tanh), LayerTrace::Mlp),
        Layer::Lstm(p) => {
            let tr = lstm_sequence(p, x, false);
            (tr.h.clone(), LayerTrace::Lstm(tr))
        }
        Layer::Blstm { forward, backward } => {
            let f = lstm_sequence(forward, x, false);
            let b = lstm_sequence(backward, x, true);
            let out = concatenate![Axis(1), f.h, b.h];
            (out, LayerTrace::Blstm(f, b))
        }
    }
}

/// Output sequence of one layer for a `T x D` input.
pub fn layer_forward(layer: &Layer, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    if inputs.nrows() == 0 {
        return Err(Error::Validation("empty input sequence".into()));
    }
    if inputs.ncols() != layer.input_dim() {
        return Err(Error::dim("layer input", layer.input_dim(), inputs.ncols()));
    }
    Ok(run_layer(layer, inputs).0)
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

/// Forward pass over a `T x D` feature sequence.
pub fn network_forward(net: &Network, features: ArrayView2<f64>) -> Result<ForwardTrace> {
    net.check()?;
    if features.nrows() == 0 {
        return Err(Error::Validation("empty input sequence".into()));
    }
    if features.ncols() != net.input_dim() {
        return Err(Error::dim("network input", net.input_dim(), features.ncols()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network input".into()));
    }
    let mut inputs = vec![features.to_owned()];
    let mut layers = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let (out, tr) = run_layer(layer, inputs.last().unwrap().view());
        inputs.push(out);
        layers.push(tr);
    }
    let logits = net.output.affine(inputs.last().unwrap().view());
    let probs = softmax_rows(&logits);
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    Ok(ForwardTrace {
        fingerprint: net.fingerprint(),
        inputs,
        layers,
        probs,
    })
}

fn check_labels(probs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != probs.nrows() {
        return Err(Error::dim("label sequence", probs.nrows(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.ncols()) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for {} classes",
            probs.ncols()
        )));
    }
    Ok(())
}

/// Binary cross-entropy summed over classes and averaged over time:
/// `-(1/T) sum_t [ y.log(p) + (1 - y).log(1 - p) ]`, `p` clamped to
/// `[1e-12, 1 - 1e-12]`. `labels[t]` is the index of the one-hot class.
pub fn loss(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let t_len = probs.nrows() as f64;
    let mut total = 0.0;
    for (row, &y) in probs.outer_iter().zip(labels) {
        for (k, &p) in row.iter().enumerate() {
            total += log_likelihood_term(p, k == y);
        }
    }
    Ok(-total / t_len)
}

/// `log(p)` for the labelled class, `log(1 - p)` otherwise, after clamping.
pub(crate) fn log_likelihood_term(p: f64, is_label: bool) -> f64 {
    let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    if is_label {
        p.ln()
    } else {
        (-p).ln_1p()
    }
}

/// Gradient of [`loss`] w.r.t. the pre-softmax logits.
fn loss_logit_grad(probs: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let t_len = probs.nrows() as f64;
    let mut out = Array2::zeros(probs.raw_dim());
    for ((row, &y), mut d) in probs.outer_iter().zip(labels).zip(out.outer_iter_mut()) {
        let dp: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                if !(LOSS_EPS..=1.0 - LOSS_EPS).contains(&p) {
                    0.0
                } else if k == y {
                    -1.0 / (p * t_len)
                } else {
                    1.0 / ((1.0 - p) * t_len)
                }
            })
            .collect();
        let dot: f64 = row.iter().zip(&dp).map(|(p, g)| p * g).sum();
        for (k, &p) in row.iter().enumerate() {
            d[k] = p * (dp[k] - dot);
        }
    }
    out
}

/// Exact gradients of [`loss`] for the trace's sequence; returns the loss too.
pub fn network_backward(net: &Network, trace: &ForwardTrace, labels: &[usize]) -> Result<(f64, Gradients)> {
    network_backward_with(net, trace, labels, None)
}

#[doc(hidden)]
pub fn network_backward_with(
    net: &Network,
    trace: &ForwardTrace,
    labels: &[usize],
    fault: Option<BackpropFault>,
) -> Result<(f64, Gradients)> {
    if trace.fingerprint != net.fingerprint() || trace.layers.len() != net.layers.len() {
        return Err(Error::Validation(
            "stale forward trace: network parameters changed since the forward pass".into(),
        ));
    }
    let value = loss(&trace.probs, labels)?;
    let mut grads = Network::zeros(&net.shape())?;

    let d_logits = loss_logit_grad(&trace.probs, labels);
    let top = trace.inputs.last().unwrap();
    grads.output.weight.assign(&d_logits.t().dot(top));
    grads.output.bias.assign(&d_logits.sum_axis(Axis(0)));
    let mut d_out = d_logits.dot(&net.output.weight);

    for n in (0..net.layers.len()).rev() {
        let x = trace.inputs[n].view();
        d_out = match (&net.layers[n], &trace.layers[n], &mut grads.layers[n]) {
            (Layer::Mlp(d), LayerTrace::Mlp, Layer::Mlp(g)) => {
                let y = &trace.inputs[n + 1];
                let dz = &d_out * &y.mapv(|v| 1.0 - v * v);
                g.weight.assign(&dz.t().dot(&x));
                g.bias.assign(&dz.sum_axis(Axis(0)));
                dz.dot(&d.weight)
            }
            (Layer::Lstm(p), LayerTrace::Lstm(tr), Layer::Lstm(g)) => {
                lstm::lstm_sequence_backward(p, x, tr, d_out.view(), g, fault)
            }
            (
                Layer::Blstm { forward, backward },
                LayerTrace::Blstm(tf, tb),
                Layer::Blstm { forward: gf, backward: gb },
            ) => {
                let h = forward.hidden();
                let dx_f = lstm::lstm_sequence_backward(forward, x, tf, d_out.slice(s![.., ..h]), gf, fault);
                let dx_b = lstm::lstm_sequence_backward(backward, x, tb, d_out.slice(s![.., h..]), gb, fault);
                dx_f + dx_b
            }
            _ => unreachable!("trace and network layer kinds are checked by fingerprint"),
        };
    }
    Ok((value, grads))
}

/// Per-timestep argmax; ties go to the lowest class index.
pub fn predict_stages(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(shape: &NetShape, seed: u64, scale: f64) -> Network {
        let mut net = Network::zeros(shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in net.tensors_mut() {
            for v in t {
                *v = rng.random_range(-scale..scale);
            }
        }
        net
    }

    fn random_seq(t: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Network::zeros(&NetShape::uniform(7, LayerKind::Blstm, 2, 3, 5)).unwrap();
        let tr = network_forward(&net, random_seq(4, 7, 0).view()).unwrap();
        assert!(tr.probs.iter().all(|&p| p == 0.2));
    }

    #[test]
    fn rows_sum_to_one() {
        for kind in [LayerKind::Mlp, LayerKind::Lstm, LayerKind::Blstm] {
            let net = random_net(&NetShape::uniform(5, kind, 2, 6, 5), 3, 1.5);
            let tr = network_forward(&net, random_seq(9, 5, 1).view()).unwrap();
            for row in tr.probs.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_layer_net_is_a_composition() {
        let shape = NetShape {
            input_dim: 4,
            layers: vec![
                LayerSpec { kind: LayerKind::Blstm, units: 3 },
                LayerSpec { kind: LayerKind::Mlp, units: 5 },
            ],
            num_classes: 4,
        };
        let net = random_net(&shape, 9, 0.8);
        let x = random_seq(7, 4, 2);
        let h1 = layer_forward(&net.layers[0], x.view()).unwrap();
        let h2 = layer_forward(&net.layers[1], h1.view()).unwrap();
        let logits = h2.dot(&net.output.weight.t()) + &net.output.bias;
        let want = softmax_rows(&logits);
        let got = network_forward(&net, x.view()).unwrap().probs;
        assert!((&got - &want).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn blstm_is_two_unidirectional_passes() {
        let shape = NetShape::uniform(3, LayerKind::Blstm, 1, 4, 5);
        let net = random_net(&shape, 4, 0.7);
        let Layer::Blstm { forward, backward } = &net.layers[0] else { unreachable!() };
        let x = random_seq(8, 3, 5);
        let out = layer_forward(&net.layers[0], x.view()).unwrap();

        let fwd = layer_forward(&Layer::Lstm(forward.clone()), x.view()).unwrap();
        let mut x_rev = x.clone();
        x_rev.invert_axis(Axis(0));
        let mut bwd = layer_forward(&Layer::Lstm(backward.clone()), x_rev.view()).unwrap();
        bwd.invert_axis(Axis(0));
        let want = concatenate![Axis(1), fwd, bwd];
        assert!((&out - &want).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn blstm_direction_symmetry() {
        let shape = NetShape::uniform(3, LayerKind::Blstm, 1, 4, 5);
        let net = random_net(&shape, 6, 0.7);
        let Layer::Blstm { forward, backward } = &net.layers[0] else { unreachable!() };
        let swapped = Layer::Blstm { forward: backward.clone(), backward: forward.clone() };
        let x = random_seq(8, 3, 7);
        let mut x_rev = x.clone();
        x_rev.invert_axis(Axis(0));
        let a = layer_forward(&net.layers[0], x.view()).unwrap();
        let b = layer_forward(&swapped, x_rev.view()).unwrap();
        for t in 0..8 {
            for j in 0..4 {
                assert!((a[[t, j]] - b[[7 - t, 4 + j]]).abs() < 1e-15);
                assert!((a[[t, 4 + j]] - b[[7 - t, j]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zeroed_backward_direction_leaves_forward_half_intact() {
        let shape = NetShape::uniform(3, LayerKind::Blstm, 1, 4, 5);
        let mut net = random_net(&shape, 8, 0.7);
        let Layer::Blstm { forward, backward } = &mut net.layers[0] else { unreachable!() };
        *backward = LstmParams::zeros(3, 4);
        let x = random_seq(6, 3, 1);
        let uni = layer_forward(&Layer::Lstm(forward.clone()), x.view()).unwrap();
        let bi = layer_forward(&net.layers[0], x.view()).unwrap();
        assert_eq!(bi.slice(s![.., ..4]).to_owned(), uni);
        assert!(bi.slice(s![.., 4..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_has_no_recurrence() {
        let net = random_net(&NetShape::uniform(3, LayerKind::Mlp, 1, 4, 5), 2, 1.0);
        let x = random_seq(5, 3, 3);
        let perm = [3, 0, 4, 1, 2];
        let xp = Array2::from_shape_fn((5, 3), |(t, j)| x[[perm[t], j]]);
        let a = layer_forward(&net.layers[0], x.view()).unwrap();
        let b = layer_forward(&net.layers[0], xp.view()).unwrap();
        for t in 0..5 {
            assert_eq!(a.row(perm[t]), b.row(t));
        }
    }

    #[test]
    fn no_state_leaks_between_sequences() {
        let net = random_net(&NetShape::uniform(3, LayerKind::Blstm, 2, 4, 5), 5, 0.9);
        let a = random_seq(6, 3, 10);
        let b = random_seq(9, 3, 11);
        let alone = network_forward(&net, b.view()).unwrap();
        let _ = network_forward(&net, a.view()).unwrap();
        let after = network_forward(&net, b.view()).unwrap();
        assert_eq!(alone, after);
    }

    #[test]
    fn loss_examples() {
        let uniform = Array2::from_elem((1, 5), 0.2);
        let l = loss(&uniform, &[2]).unwrap();
        let want = -(0.2f64.ln() + 4.0 * 0.8f64.ln());
        assert!((l - want).abs() < 1e-12);
        assert!((l - 2.5020).abs() < 1e-4);

        let perfect = array![[0.0, 1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0]];
        assert!(loss(&perfect, &[1, 0]).unwrap().abs() < 1e-10);

        let mut prev = f64::INFINITY;
        for step in 0..=10 {
            let a = step as f64 / 10.0 * 0.999;
            let row: Vec<f64> = (0..5).map(|k| (1.0 - a) * 0.2 + if k == 3 { a } else { 0.0 }).collect();
            let l = loss(&Array2::from_shape_vec((1, 5), row).unwrap(), &[3]).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(loss(&uniform, &[0, 1]).is_err());
    }

    #[test]
    fn argmax_examples() {
        let p = array![[0.1, 0.6, 0.1, 0.1, 0.1], [0.2, 0.2, 0.2, 0.2, 0.2]];
        assert_eq!(predict_stages(&p), vec![1, 0]);
    }

    #[test]
    fn softmax_ignores_logit_offsets() {
        let z = array![[1.0, -2.0, 0.5, 3.0]];
        let shifted = &z + 123.4;
        let a = softmax_rows(&z);
        let b = softmax_rows(&shifted);
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(predict_stages(&a), predict_stages(&b));
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut net = random_net(&NetShape::uniform(3, LayerKind::Lstm, 1, 2, 4), 1, 0.5);
        let x = random_seq(3, 3, 0);
        let tr = network_forward(&net, x.view()).unwrap();
        assert!(network_backward(&net, &tr, &[0, 1, 2]).is_ok());
        net.output.bias[0] += 1e-3;
        assert!(network_backward(&net, &tr, &[0, 1, 2]).is_err());
    }

    #[test]
    fn backward_is_deterministic() {
        let net = random_net(&NetShape::uniform(4, LayerKind::Blstm, 2, 3, 5), 12, 0.5);
        let x = random_seq(7, 4, 3);
        let labels = [0, 1, 2, 3, 4, 0, 1];
        let g1 = network_backward(&net, &network_forward(&net, x.view()).unwrap(), &labels).unwrap();
        let g2 = network_backward(&net, &network_forward(&net, x.view()).unwrap(), &labels).unwrap();
        assert_eq!(g1.0.to_bits(), g2.0.to_bits());
        let b1: Vec<u64> = g1.1.flat().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u64> = g2.1.flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(b1, b2);
    }

    #[test]
    fn dimension_errors() {
        let net = Network::zeros(&NetShape::uniform(3, LayerKind::Lstm, 1, 2, 4)).unwrap();
        assert!(network_forward(&net, random_seq(3, 4, 0).view()).is_err());
        assert!(network_forward(&net, Array2::zeros((0, 3)).view()).is_err());
    }
}
