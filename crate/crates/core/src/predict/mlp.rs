//! Fully connected regression network trained by mini-batch Adam on MSE.
//!
//! Parameters live in one flat vector, layer by layer: the `out × in`
//! row-major weight matrix followed by the `out` biases. Targets are in kHz.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anthro::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};

use super::{Activation, EpochLog, ModelSpec};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output, e.g. `[9, 40, 40, 40, 1]`.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Per-example forward/backward buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    pub fn architecture(spec: &ModelSpec) -> Vec<usize> {
        let mut sizes = vec![NUM_FEATURES];
        sizes.extend(std::iter::repeat(spec.hidden_units).take(spec.hidden_layers));
        sizes.push(1);
        sizes
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights uniform in ±√(6/fan_in), biases zero.
    pub fn init(sizes: Vec<usize>, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(&sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes,
            activation,
            params,
        }
    }

    pub fn zeros(sizes: Vec<usize>, activation: Activation) -> Self {
        let params = vec![0.0; Self::param_count(&sizes)];
        Self {
            sizes,
            activation,
            params,
        }
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// (weight offset, bias offset) of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn output_bias_mut(&mut self) -> &mut f64 {
        self.params.last_mut().expect("non-empty network")
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            pre: self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            post: self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; *self.sizes.iter().max().unwrap()],
            delta_prev: vec![0.0; *self.sizes.iter().max().unwrap()],
        }
    }

    pub fn forward(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let last = self.layers() - 1;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let weights = &self.params[w_off..b_off];
            let biases = &self.params[b_off..b_off + n_out];
            let (before, after) = ws.post.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            let pre = &mut ws.pre[l];
            let post = &mut after[0];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z = biases[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                pre[o] = z;
                post[o] = if l == last { z } else { self.activation.apply(z) };
            }
        }
        ws.post[last][0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x, &mut self.workspace())
    }

    /// Adds `d_out · ∂ŷ/∂θ` for the example last passed through `forward`.
    fn backward(&self, x: &[f64], d_out: f64, ws: &mut Workspace, grad: &mut [f64]) {
        let last = self.layers() - 1;
        ws.delta[0] = d_out;
        for l in (0..=last).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let input: &[f64] = if l == 0 { x } else { &ws.post[l - 1] };
            for o in 0..n_out {
                let d = ws.delta[o];
                let g = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (gi, a) in g.iter_mut().zip(input) {
                    *gi += d * a;
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                let weights = &self.params[w_off..b_off];
                let prev = &mut ws.delta_prev[..n_in];
                prev.iter_mut().for_each(|p| *p = 0.0);
                for o in 0..n_out {
                    let d = ws.delta[o];
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += w * d;
                    }
                }
                for (i, p) in prev.iter_mut().enumerate() {
                    *p *= self
                        .activation
                        .derivative(ws.pre[l - 1][i], ws.post[l - 1][i]);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_gradient(&self, xs: &[FeatureVector], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = self.workspace();
        let scale = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let r = self.forward(x, &mut ws) - y;
            loss += r * r * scale;
            self.backward(x, 2.0 * r * scale, &mut ws, &mut grad);
        }
        (loss, grad)
    }

    pub fn loss(&self, xs: &[FeatureVector], ys: &[f64]) -> f64 {
        let mut ws = self.workspace();
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (self.forward(x, &mut ws) - y).powi(2))
            .sum::<f64>()
            / xs.len() as f64
    }

    /// Hidden-unit on/off pattern over a batch (ReLU kinks).
    fn activation_pattern(&self, xs: &[FeatureVector]) -> Vec<bool> {
        let mut ws = self.workspace();
        let mut out = Vec::new();
        for x in xs {
            self.forward(x, &mut ws);
            for l in 0..self.layers() - 1 {
                out.extend(ws.pre[l].iter().map(|z| *z > 0.0));
            }
        }
        out
    }
}

fn rms_khz_to_hz(m: &Mlp, xs: &[FeatureVector], ys: &[f64]) -> f64 {
    m.loss(xs, ys).sqrt() * 1000.0
}

/// Trains on kHz targets, keeping the snapshot with the lowest validation RMS.
///
/// The output bias starts at the mean training target. Training stops after
/// `patience` epochs without validation improvement or at `max_epochs`.
pub fn fit(
    x_train: &[FeatureVector],
    y_train_khz: &[f64],
    x_val: &[FeatureVector],
    y_val_khz: &[f64],
    spec: &ModelSpec,
) -> Result<(Mlp, Vec<EpochLog>, usize)> {
    if x_val.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if x_train.is_empty() {
        return Err(Error::DatasetTooSmall("empty training set".into()));
    }
    if x_train.len() != y_train_khz.len() {
        return Err(Error::LengthMismatch(x_train.len(), y_train_khz.len()));
    }
    if x_val.len() != y_val_khz.len() {
        return Err(Error::LengthMismatch(x_val.len(), y_val_khz.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut net = Mlp::init(Mlp::architecture(spec), spec.activation, &mut rng);
    *net.output_bias_mut() = y_train_khz.iter().sum::<f64>() / y_train_khz.len() as f64;

    let n_params = net.params.len();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut ws = net.workspace();
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let mut step = 0i32;

    let mut best = net.clone();
    let mut best_val = rms_khz_to_hz(&net, x_val, y_val_khz);
    let mut best_epoch = 0;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_rms_hz: rms_khz_to_hz(&net, x_train, y_train_khz),
        val_rms_hz: best_val,
    }];

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(spec.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                let r = net.forward(&x_train[i], &mut ws) - y_train_khz[i];
                loss += r * r * scale;
                net.backward(&x_train[i], 2.0 * r * scale, &mut ws, &mut grad);
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for (((p, g), a), b) in net.params.iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
                *a = ADAM_BETA1 * *a + (1.0 - ADAM_BETA1) * g;
                *b = ADAM_BETA2 * *b + (1.0 - ADAM_BETA2) * g * g;
                *p -= spec.learning_rate * (*a / c1) / ((*b / c2).sqrt() + ADAM_EPSILON);
            }
        }

        let train_rms_hz = rms_khz_to_hz(&net, x_train, y_train_khz);
        let val_rms_hz = rms_khz_to_hz(&net, x_val, y_val_khz);
        if !train_rms_hz.is_finite() || !val_rms_hz.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log.push(EpochLog {
            epoch,
            train_rms_hz,
            val_rms_hz,
        });
        if val_rms_hz < best_val {
            best_val = val_rms_hz;
            best = net.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= spec.patience {
            break;
        }
    }
    Ok((best, log, best_epoch))
}

/// Worst relative deviation between backpropagated gradients and central
/// finite differences (step 1e-4) over `n_probes` random parameters.
///
/// The network is drawn from `spec` with biases also randomized, and the
/// batch is random. For ReLU, probes whose ±step would flip any unit's
/// on/off state are redrawn, so the comparison stays off the kinks.
pub fn gradient_check(spec: &ModelSpec, n_probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut net = Mlp::init(Mlp::architecture(spec), spec.activation, &mut rng);
    for l in 0..net.layers() {
        let (_, b_off) = net.offsets(l);
        for b in &mut net.params[b_off..b_off + net.sizes[l + 1]] {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    let xs: Vec<FeatureVector> = (0..16)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
        .collect();
    let ys: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    gradient_check_at(&net, &xs, &ys, n_probes, &mut rng)
}

pub fn gradient_check_at(
    net: &Mlp,
    xs: &[FeatureVector],
    ys: &[f64],
    n_probes: usize,
    rng: &mut impl Rng,
) -> f64 {
    const STEP: f64 = 1e-4;
    let (_, analytic) = net.loss_and_gradient(xs, ys);
    let base_pattern = (net.activation == Activation::Relu).then(|| net.activation_pattern(xs));

    let mut worst: f64 = 0.0;
    let mut probes = 0;
    let mut attempts = 0;
    let mut probe = net.clone();
    while probes < n_probes && attempts < 100 * n_probes.max(1) {
        attempts += 1;
        let i = rng.gen_range(0..net.params.len());
        let theta = net.params[i];
        probe.params[i] = theta + STEP;
        let plus = probe.loss(xs, ys);
        let plus_pattern = base_pattern.as_ref().map(|_| probe.activation_pattern(xs));
        probe.params[i] = theta - STEP;
        let minus = probe.loss(xs, ys);
        let minus_pattern = base_pattern.as_ref().map(|_| probe.activation_pattern(xs));
        probe.params[i] = theta;
        if let Some(base) = &base_pattern {
            if plus_pattern.as_ref() != Some(base) || minus_pattern.as_ref() != Some(base) {
                continue;
            }
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
        probes += 1;
    }
    worst
}
