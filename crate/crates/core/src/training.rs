//! Initialisation, SGD with Gaussian weight noise, early stopping, and the
//! finite-difference gradient check.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::network::{
    log_likelihood_term, loss, network_backward, network_backward_with, network_forward, BackpropFault, NetShape,
    Network, ParamRole,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub init_std: f64,
    pub weight_noise_std: f64,
    pub max_passes: usize,
    /// Stop after this many passes without a new best validation loss.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-6,
            init_std: 0.1,
            weight_noise_std: 0.005,
            max_passes: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be a finite non-negative number".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        if !(self.weight_noise_std >= 0.0) {
            return Err(Error::Config("weight_noise_std must be non-negative".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every weight and bias drawn i.i.d. from `Normal(0, init_std^2)`, in
/// canonical tensor order, from a ChaCha stream keyed by `seed`.
pub fn init_params(shape: &NetShape, seed: u64, init_std: f64) -> Result<Network> {
    let mut net = Network::zeros(shape)?;
    let normal = Normal::new(0.0, init_std)
        .map_err(|e| Error::Config(format!("init_std {init_std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in net.tensors_mut() {
        for v in t.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(net)
}

/// One labelled sequence (a whole recording): `T x D` features, class per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassRecord {
    pub pass: usize,
    /// Mean loss over the pass's sequences, on the noise-perturbed weights.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub passes: Vec<PassRecord>,
    /// 1-based pass whose parameters were kept.
    pub best_pass: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pass,train_loss,val_loss\n");
        for p in &self.passes {
            s.push_str(&format!("{},{},{}\n", p.pass, p.train_loss, p.val_loss));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// `w <- w - lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (w, g) in params.iter_mut().zip(grads) {
        *w -= lr * g;
    }
}

/// Mean loss over sequences with the current (noise-free) parameters.
pub fn mean_loss(net: &Network, seqs: &[Sequence]) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::Validation("no sequences to evaluate".into()));
    }
    let mut total = 0.0;
    for s in seqs {
        let tr = network_forward(net, s.features.view())?;
        total += loss(&tr.probs, &s.labels)?;
    }
    Ok(total / seqs.len() as f64)
}

fn perturb_weights(net: &mut Network, normal: &Normal<f64>, rng: &mut ChaCha8Rng) {
    for (role, t) in net.tensors_mut() {
        if role == ParamRole::Weight {
            for v in t.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
}

/// Per-sequence SGD with weight noise and early stopping.
///
/// Each pass visits the training sequences in a seeded shuffled order. For
/// each sequence every weight (not bias) is perturbed with fresh
/// `Normal(0, sigma^2)` noise, gradients are taken at the perturbed point,
/// the clean weights are restored and updated. After each pass the
/// validation loss is computed without noise; the best parameters seen are
/// returned.
pub fn train(
    net: Network,
    train_seqs: &[Sequence],
    val_seqs: &[Sequence],
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train_seqs.is_empty() || val_seqs.is_empty() {
        return Err(Error::Validation(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let noise = Normal::new(0.0, cfg.weight_noise_std)
        .map_err(|e| Error::Config(format!("weight_noise_std: {e}")))?;

    let mut net = net;
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;
    let mut history = TrainHistory::default();
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_seqs.len()).collect();

    for pass in 1..=cfg.max_passes {
        order.shuffle(&mut order_rng);
        let mut train_total = 0.0;
        for &i in &order {
            let seq = &train_seqs[i];
            let (value, grads) = if cfg.weight_noise_std > 0.0 {
                let clean = net.clone();
                perturb_weights(&mut net, &noise, &mut noise_rng);
                let tr = network_forward(&net, seq.features.view());
                let out = tr.and_then(|tr| network_backward(&net, &tr, &seq.labels));
                net = clean;
                out?
            } else {
                let tr = network_forward(&net, seq.features.view())?;
                network_backward(&net, &tr, &seq.labels)?
            };
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss in pass {pass}")));
            }
            train_total += value;
            for ((_, w), (_, g)) in net.tensors_mut().into_iter().zip(grads.tensors()) {
                sgd_step(w, g, cfg.learning_rate);
            }
        }
        let val_loss = mean_loss(&net, val_seqs)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss in pass {pass}")));
        }
        history.passes.push(PassRecord {
            pass,
            train_loss: train_total / train_seqs.len() as f64,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = net.clone();
            history.best_pass = pass;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if history.passes.is_empty() {
        best = net;
    }
    Ok((best, history))
}

/// Parameter scale used for the random networks in [`gradient_check`].
pub const GRADCHECK_INIT_STD: f64 = 0.5;

/// Central-difference step used by default.
pub const DEFAULT_FD_STEP: f64 = 3e-5;

/// Largest relative error between analytic and central-difference
/// gradients, `|a - n| / max(|a|, |n|, 1e-8)`, over every parameter of a
/// random network on a random length-`t_len` sequence.
pub fn gradient_check(shape: &NetShape, t_len: usize, seed: u64, step: f64) -> Result<f64> {
    gradient_check_with(shape, t_len, seed, step, None)
}

#[doc(hidden)]
pub fn gradient_check_with(
    shape: &NetShape,
    t_len: usize,
    seed: u64,
    step: f64,
    fault: Option<BackpropFault>,
) -> Result<f64> {
    if t_len == 0 {
        return Err(Error::Validation("gradient check needs T >= 1".into()));
    }
    let mut net = init_params(shape, seed, GRADCHECK_INIT_STD)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((t_len, shape.input_dim), |_| normal.sample(&mut rng));
    let labels: Vec<usize> = (0..t_len).map(|_| rng.random_range(0..shape.num_classes)).collect();

    let trace = network_forward(&net, x.view())?;
    let (_, grads) = network_backward_with(&net, &trace, &labels, fault)?;
    let analytic = grads.flat();
    let mut params = net.flat();
    let probs_at = |net: &mut Network, p: &[f64]| -> Result<Array2<f64>> {
        net.set_flat(p)?;
        Ok(network_forward(net, x.view())?.probs)
    };

    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + step;
        let up = probs_at(&mut net, &params)?;
        params[k] = orig - step;
        let down = probs_at(&mut net, &params)?;
        params[k] = orig;
        // L(w+h) - L(w-h), differenced term by term before summing
        let mut delta = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            for c in 0..shape.num_classes {
                delta += log_likelihood_term(up[[t, c]], c == y)
                    - log_likelihood_term(down[[t, c]], c == y);
            }
        }
        let numeric = -delta / t_len as f64 / (2.0 * step);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at parameter {k}")));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}
