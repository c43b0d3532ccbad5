//! Full-batch losses, backpropagation and Adam.

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::{Network, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over examples of the summed squared error.
    Mse,
    /// Mean softmax cross-entropy over class logits.
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::SoftmaxCrossEntropy,
        }
    }
}

/// Gradients of one layer's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub b: Option<DenseMatrix>,
    pub a: Option<DenseMatrix>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Same ordering as [`Network::trainable_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            if let (Some(b), Some(a)) = (&g.b, &g.a) {
                out.extend_from_slice(b.data());
                out.extend_from_slice(a.data());
            }
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Per-example loss and its gradient with respect to the network output.
fn output_loss(kind: LossKind, out: &[f64], target: TargetRef) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::Mse, TargetRef::Value(y)) => {
            if out.len() != 1 {
                return Err(Error::Shape(format!(
                    "scalar regression targets need one output, network has {}",
                    out.len()
                )));
            }
            let r = out[0] - y;
            Ok((r * r, vec![2.0 * r]))
        }
        (LossKind::SoftmaxCrossEntropy, TargetRef::Class(c)) => {
            if c >= out.len() {
                return Err(Error::Shape(format!(
                    "class {c} but only {} logits",
                    out.len()
                )));
            }
            let loss = log_sum_exp(out) - out[c];
            let mut grad = softmax(out);
            grad[c] -= 1.0;
            Ok((loss, grad))
        }
        _ => Err(Error::Unsupported(
            "loss kind does not match target type".into(),
        )),
    }
}

#[derive(Clone, Copy)]
enum TargetRef {
    Value(f64),
    Class(usize),
}

fn target_at(targets: &Targets, i: usize) -> TargetRef {
    match targets {
        Targets::Values(v) => TargetRef::Value(v[i]),
        Targets::Classes(c) => TargetRef::Class(c[i]),
    }
}

/// Full-batch loss and gradients for the trainable parameters.
///
/// The objective is `mean_i loss_i + (l2_weight_decay / 2) · ‖θ‖²` where `θ`
/// ranges over `B`, `A` and the biases only, so the decay contributes
/// `l2_weight_decay · θ` to every gradient.
pub fn loss_and_grads(
    net: &Network,
    batch: &Dataset,
    loss_kind: LossKind,
    l2_weight_decay: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let targets = batch.targets().ok_or(Error::MissingLabels)?;
    let layers = net.layers();
    let mut grads = Gradients {
        layers: layers
            .iter()
            .map(|l| LayerGrads {
                b: l.b().map(|b| DenseMatrix::zeros(b.rows(), b.cols())),
                a: l.a().map(|a| DenseMatrix::zeros(a.rows(), a.cols())),
                bias: vec![0.0; l.bias().len()],
            })
            .collect(),
    };
    let mut total = 0.0;

    for (i, x) in batch.inputs().iter().enumerate() {
        // Forward with caches.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        let mut h = x.clone();
        if h.len() != net.input_dim() {
            return Err(Error::Shape(format!(
                "example {i} has {} features",
                h.len()
            )));
        }
        for layer in layers {
            let z = layer.pre_activation(&h, None);
            let act = layer.spec().activation;
            let next: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        let (loss, mut upstream) = output_loss(loss_kind, &h, target_at(targets, i))?;
        total += loss;

        for (idx, layer) in layers.iter().enumerate().rev() {
            let act = layer.spec().activation;
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&pre[idx])
                .map(|(g, z)| g * act.derivative(*z))
                .collect();
            let h_in = &inputs[idx];
            let g = &mut grads.layers[idx];
            for (gb, d) in g.bias.iter_mut().zip(&dz) {
                *gb += d;
            }
            let mut dh = layer.w0().mul_vec_transposed(&dz);
            if let (Some(b), Some(a)) = (layer.b(), layer.a()) {
                let ah = a.mul_vec(h_in);
                let bt_dz = b.mul_vec_transposed(&dz);
                let gb = g.b.as_mut().expect("adapted layer");
                for (r, dzr) in dz.iter().enumerate() {
                    for (k, ahk) in ah.iter().enumerate() {
                        gb.set(r, k, gb.get(r, k) + dzr * ahk);
                    }
                }
                let ga = g.a.as_mut().expect("adapted layer");
                for (k, btk) in bt_dz.iter().enumerate() {
                    for (j, hj) in h_in.iter().enumerate() {
                        ga.set(k, j, ga.get(k, j) + btk * hj);
                    }
                }
                for (dhj, v) in dh.iter_mut().zip(a.mul_vec_transposed(&bt_dz)) {
                    *dhj += v;
                }
            }
            upstream = dh;
        }
    }

    let inv_n = 1.0 / batch.len() as f64;
    let params = net.trainable_params();
    let mut flat: Vec<f64> = grads.flatten().into_iter().map(|g| g * inv_n).collect();
    let mut loss = total * inv_n;
    if l2_weight_decay != 0.0 {
        let sq: f64 = params.iter().map(|p| p * p).sum();
        loss += 0.5 * l2_weight_decay * sq;
        for (g, p) in flat.iter_mut().zip(&params) {
            *g += l2_weight_decay * p;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss}")));
    }
    Ok((loss, unflatten(&grads, &flat)))
}

fn unflatten(shape: &Gradients, flat: &[f64]) -> Gradients {
    let mut offset = 0;
    let mut take = |n: usize| {
        let s = flat[offset..offset + n].to_vec();
        offset += n;
        s
    };
    Gradients {
        layers: shape
            .layers
            .iter()
            .map(|g| {
                let (b, a) = match (&g.b, &g.a) {
                    (Some(b), Some(a)) => {
                        let b_data = take(b.data().len());
                        let a_data = take(a.data().len());
                        (
                            Some(DenseMatrix::new(b.rows(), b.cols(), b_data).expect("finite")),
                            Some(DenseMatrix::new(a.rows(), a.cols(), a_data).expect("finite")),
                        )
                    }
                    _ => (None, None),
                };
                LayerGrads {
                    b,
                    a,
                    bias: take(g.bias.len()),
                }
            })
            .collect(),
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Recorded with the outcome; training itself is full-batch and has no
    /// random component beyond the network initialization.
    pub seed: u64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    /// Loss before each step.
    pub loss_curve: Vec<f64>,
    /// Loss after the final step.
    pub final_loss: f64,
}

/// Full-batch Adam on the loss matching the network's task.
pub fn train_adam(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.task() != net.task() {
        return Err(Error::InvalidConfig(format!(
            "dataset task {} does not match network task {}",
            data.task().name(),
            net.task().name()
        )));
    }
    let loss_kind = LossKind::for_task(net.task());
    let mut net = net.clone();
    let mut params = net.trainable_params();
    let mut adam = Adam::new(params.len(), cfg.lr);
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    let diverged = |step: usize, e: Error| match e {
        Error::NonFinite(_) => Error::Diverged {
            step,
            loss: f64::NAN,
        },
        other => other,
    };
    for step in 0..cfg.steps {
        let (loss, grads) = loss_and_grads(&net, data, loss_kind, cfg.weight_decay)
            .map_err(|e| diverged(step, e))?;
        loss_curve.push(loss);
        adam.step(&mut params, &grads.flatten());
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step, loss });
        }
        net.set_trainable_params(&params)?;
    }
    let (final_loss, _) = loss_and_grads(&net, data, loss_kind, cfg.weight_decay)
        .map_err(|e| diverged(cfg.steps, e))?;
    Ok(TrainOutcome {
        net,
        loss_curve,
        final_loss,
    })
}

/// Mean squared error of the deterministic predictions (no weight decay).
pub fn training_mse(net: &Network, data: &Dataset) -> Result<f64> {
    let (loss, _) = loss_and_grads(net, data, LossKind::Mse, 0.0)?;
    Ok(loss)
}
