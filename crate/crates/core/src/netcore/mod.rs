//! A small feed-forward network with frozen base weights and trainable
//! low-rank deltas.
//!
//! Every layer computes `z = W0·h + B·(A·h) + bias` (the `B·A` term only for
//! adapted layers) followed by an elementwise activation. `W0` never receives
//! gradients; `B`, `A` and the biases do.

mod train;

pub(crate) use train::softmax;
pub use train::{
    loss_and_grads, train_adam, training_mse, Adam, Gradients, LayerGrads, LossKind, TrainConfig,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::adapter::{LoraAdapter, NoisePlan};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    #[serde(rename = "ReLU")]
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    DenseAdapted,
    DenseFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Adapter rank; ignored for fixed layers.
    pub rank: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn adapted(in_dim: usize, out_dim: usize, rank: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::DenseAdapted,
            in_dim,
            out_dim,
            rank,
            activation,
        }
    }

    pub fn fixed(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::DenseFixed,
            in_dim,
            out_dim,
            rank: 0,
            activation,
        }
    }

    pub fn is_adapted(&self) -> bool {
        self.kind == LayerKind::DenseAdapted
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if self.is_adapted() && (self.rank == 0 || self.rank > self.in_dim.min(self.out_dim)) {
            return Err(Error::Shape(format!(
                "adapter rank {} must lie in 1..=min({}, {})",
                self.rank, self.in_dim, self.out_dim
            )));
        }
        Ok(())
    }
}

/// A layer with its bound parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    w0: DenseMatrix,
    adapter: Option<(DenseMatrix, DenseMatrix)>,
    bias: Vec<f64>,
}

impl Layer {
    /// `b` and `a` must be given exactly when `spec` describes an adapted layer.
    pub fn new(
        spec: LayerSpec,
        w0: DenseMatrix,
        adapter: Option<(DenseMatrix, DenseMatrix)>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        if w0.shape() != (spec.out_dim, spec.in_dim) || bias.len() != spec.out_dim {
            return Err(Error::Shape(format!(
                "layer {}->{}: W0 is {}x{}, bias has {}",
                spec.in_dim,
                spec.out_dim,
                w0.rows(),
                w0.cols(),
                bias.len()
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bias".into()));
        }
        match (&adapter, spec.is_adapted()) {
            (Some((b, a)), true) => {
                if b.shape() != (spec.out_dim, spec.rank) || a.shape() != (spec.rank, spec.in_dim) {
                    return Err(Error::Shape(format!(
                        "adapter B {}x{} / A {}x{} for {}->{} rank {}",
                        b.rows(),
                        b.cols(),
                        a.rows(),
                        a.cols(),
                        spec.in_dim,
                        spec.out_dim,
                        spec.rank
                    )));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::Shape(
                    "adapter tensors present iff the layer is adapted".into(),
                ))
            }
        }
        Ok(Self {
            spec,
            w0,
            adapter,
            bias,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn w0(&self) -> &DenseMatrix {
        &self.w0
    }

    pub fn b(&self) -> Option<&DenseMatrix> {
        self.adapter.as_ref().map(|(b, _)| b)
    }

    pub fn a(&self) -> Option<&DenseMatrix> {
        self.adapter.as_ref().map(|(_, a)| a)
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn lora(&self) -> Option<LoraAdapter> {
        self.adapter.as_ref().map(|(b, a)| {
            LoraAdapter::new(self.w0.clone(), b.clone(), a.clone()).expect("validated layer")
        })
    }

    /// Pre-activation `W0 h + B(A h) + noise(h) + bias`.
    fn pre_activation(
        &self,
        h: &[f64],
        noise: Option<&crate::adapter::WeightNoise<'_>>,
    ) -> Vec<f64> {
        let mut z = self.w0.mul_vec(h);
        if let Some((b, a)) = &self.adapter {
            let ah = a.mul_vec(h);
            for (zi, di) in z.iter_mut().zip(b.mul_vec(&ah)) {
                *zi += di;
            }
        }
        if let Some(noise) = noise {
            for (zi, ni) in z.iter_mut().zip(noise.apply(h)) {
                *zi += ni;
            }
        }
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    fn forward(&self, h: &[f64], noise: Option<&crate::adapter::WeightNoise<'_>>) -> Vec<f64> {
        let act = self.spec.activation;
        self.pre_activation(h, noise)
            .into_iter()
            .map(|z| act.apply(z))
            .collect()
    }

    fn trainable_len(&self) -> usize {
        let adapter = self
            .adapter
            .as_ref()
            .map_or(0, |(b, a)| b.data().len() + a.data().len());
        adapter + self.bias.len()
    }
}

/// Feed-forward network of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    task: Task,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(task: Task, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].spec.out_dim != pair[1].spec.in_dim {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed next input {}",
                    pair[0].spec.out_dim, pair[1].spec.in_dim
                )));
            }
        }
        Ok(Self { task, layers })
    }

    /// Seeded initialization: `W0`, biases and `B` from `N(0, 1/in_dim)`,
    /// `A = 0` so the adapted model starts at the base model.
    pub fn init(task: Task, topology: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut layers = Vec::with_capacity(topology.len());
        for (idx, spec) in topology.iter().enumerate() {
            spec.validate()?;
            let std = (1.0 / spec.in_dim as f64).sqrt();
            let key = |part: u64| Stream::new(seed, &[tag::INIT, idx as u64, part]);
            let mut s = key(0);
            let w0 = DenseMatrix::from_fn(spec.out_dim, spec.in_dim, |_, _| std * s.normal());
            let mut s = key(1);
            let bias = (0..spec.out_dim).map(|_| std * s.normal()).collect();
            let adapter = spec.is_adapted().then(|| {
                let mut s = key(2);
                let b = DenseMatrix::from_fn(spec.out_dim, spec.rank, |_, _| std * s.normal());
                (b, DenseMatrix::zeros(spec.rank, spec.in_dim))
            });
            layers.push(Layer::new(*spec, w0, adapter, bias)?);
        }
        Self::new(task, layers)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn topology(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    /// `(layer index, adapter)` for every adapted layer.
    pub fn adapters(&self) -> Vec<(usize, LoraAdapter)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.lora().map(|a| (i, a)))
            .collect()
    }

    pub fn has_adapters(&self) -> bool {
        self.layers.iter().any(|l| l.spec.is_adapted())
    }

    /// Index of the last adapted layer.
    pub fn last_adapted(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.spec.is_adapted())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Output of the final layer (regression values or class logits).
    pub fn forward(&self, x: &[f64], noise: &NoisePlan<'_>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run_layers(0..self.layers.len(), x.to_vec(), noise))
    }

    /// Deterministic forward pass.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, &NoisePlan::empty())
    }

    /// Activations `[x, h_1, ..., h_L]` of every layer.
    pub fn forward_trace(&self, x: &[f64], noise: &NoisePlan<'_>) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for (idx, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(trace.last().expect("non-empty"), noise.get(idx));
            trace.push(next);
        }
        Ok(trace)
    }

    /// Activation entering the final layer.
    pub fn embed(&self, x: &[f64], noise: &NoisePlan<'_>) -> Result<Vec<f64>> {
        if self.layers.len() < 2 {
            return Err(Error::Unsupported(
                "embedding needs a network with at least two layers".into(),
            ));
        }
        self.check_input(x)?;
        Ok(self.run_layers(0..self.layers.len() - 1, x.to_vec(), noise))
    }

    /// Runs layers `range` on activation `h` (the input of `range.start`).
    pub fn run_layers(
        &self,
        range: std::ops::Range<usize>,
        mut h: Vec<f64>,
        noise: &NoisePlan<'_>,
    ) -> Vec<f64> {
        for idx in range {
            h = self.layers[idx].forward(&h, noise.get(idx));
        }
        h
    }

    pub fn trainable_len(&self) -> usize {
        self.layers.iter().map(Layer::trainable_len).sum()
    }

    /// Trainable parameters flattened as, per layer: `B` (row-major), `A`, bias.
    pub fn trainable_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        for layer in &self.layers {
            if let Some((b, a)) = &layer.adapter {
                out.extend_from_slice(b.data());
                out.extend_from_slice(a.data());
            }
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.trainable_len() {
            return Err(Error::Shape(format!(
                "expected {} trainable parameters, got {}",
                self.trainable_len(),
                params.len()
            )));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = &params[offset..offset + n];
            offset += n;
            s.to_vec()
        };
        for layer in &mut self.layers {
            if let Some((b, a)) = &mut layer.adapter {
                *b = DenseMatrix::new(b.rows(), b.cols(), take(b.data().len()))?;
                *a = DenseMatrix::new(a.rows(), a.cols(), take(a.data().len()))?;
            }
            layer.bias = take(layer.bias.len());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{AdapterSet, PosteriorFamily};

    fn fixed(w0: DenseMatrix, bias: Vec<f64>, act: Activation) -> Layer {
        let spec = LayerSpec::fixed(w0.cols(), w0.rows(), act);
        Layer::new(spec, w0, None, bias).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Network::new(
            Task::Regression,
            vec![fixed(
                DenseMatrix::identity(3),
                vec![0.0; 3],
                Activation::Identity,
            )],
        )
        .unwrap();
        let x = [0.5, -2.0, 3.25];
        assert_eq!(net.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_delta_matches_fixed_layer() {
        let w = DenseMatrix::from_rows(&[&[1.0, -2.0], &[0.5, 0.25], &[3.0, 1.0]]);
        let bias = vec![0.1, -0.2, 0.3];
        let fixed_net = Network::new(
            Task::Regression,
            vec![fixed(w.clone(), bias.clone(), Activation::Tanh)],
        )
        .unwrap();
        let spec = LayerSpec::adapted(2, 3, 1, Activation::Tanh);
        let b = DenseMatrix::from_rows(&[&[1.0], &[2.0], &[3.0]]);
        let a = DenseMatrix::zeros(1, 2);
        let adapted = Network::new(
            Task::Regression,
            vec![Layer::new(spec, w, Some((b, a)), bias).unwrap()],
        )
        .unwrap();
        let x = [0.7, -1.3];
        assert_eq!(fixed_net.predict(&x).unwrap(), adapted.predict(&x).unwrap());
    }

    #[test]
    fn zero_noise_equals_no_noise() {
        let topo = [
            LayerSpec::adapted(3, 4, 2, Activation::Tanh),
            LayerSpec::adapted(4, 2, 1, Activation::Identity),
        ];
        let mut net = Network::init(Task::Classification, &topo, 4).unwrap();
        let mut p = net.trainable_params();
        for (i, v) in p.iter_mut().enumerate() {
            *v += 0.01 * i as f64;
        }
        net.set_trainable_params(&p).unwrap();
        let set = AdapterSet::bayesianize(&net.adapters(), 0.0).unwrap();
        let x = [0.2, -0.4, 1.1];
        let plain = net.predict(&x).unwrap();
        for fam in [
            PosteriorFamily::LowRankIsotropic,
            PosteriorFamily::FullRankIsotropic,
        ] {
            let plan = set.noise_plan(fam, 3, 0, None);
            let noisy = net.forward(&x, &plan).unwrap();
            for (a, b) in plain.iter().zip(&noisy) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn embed_of_identity_first_layer() {
        let first = fixed(
            DenseMatrix::identity(2),
            vec![0.5, -0.5],
            Activation::Identity,
        );
        let second = fixed(
            DenseMatrix::from_rows(&[&[1.0, 1.0]]),
            vec![0.0],
            Activation::Identity,
        );
        let net = Network::new(Task::Regression, vec![first, second]).unwrap();
        assert_eq!(
            net.embed(&[1.0, 2.0], &NoisePlan::empty()).unwrap(),
            vec![1.5, 1.5]
        );
    }

    #[test]
    fn embed_needs_two_layers() {
        let net = Network::new(
            Task::Regression,
            vec![fixed(
                DenseMatrix::identity(2),
                vec![0.0; 2],
                Activation::Identity,
            )],
        )
        .unwrap();
        assert!(matches!(
            net.embed(&[1.0, 2.0], &NoisePlan::empty()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn embed_matches_trace_slice() {
        let topo = [
            LayerSpec::adapted(2, 5, 2, Activation::Relu),
            LayerSpec::fixed(5, 4, Activation::Tanh),
            LayerSpec::adapted(4, 3, 1, Activation::Identity),
        ];
        let net = Network::init(Task::Classification, &topo, 12).unwrap();
        for k in 0..20 {
            let x = [k as f64 * 0.1 - 1.0, 0.3 * k as f64];
            let trace = net.forward_trace(&x, &NoisePlan::empty()).unwrap();
            let emb = net.embed(&x, &NoisePlan::empty()).unwrap();
            assert_eq!(emb, trace[2]);
            assert!(crate::linalg::dot(&emb, &emb).sqrt() >= 0.0);
            assert_eq!(net.predict(&x).unwrap(), trace[3]);
        }
    }

    #[test]
    fn shape_errors() {
        let net = Network::init(
            Task::Regression,
            &[LayerSpec::fixed(2, 1, Activation::Identity)],
            1,
        )
        .unwrap();
        assert!(matches!(net.predict(&[1.0]), Err(Error::Shape(_))));
        let bad = Network::new(
            Task::Regression,
            vec![
                fixed(DenseMatrix::identity(2), vec![0.0; 2], Activation::Identity),
                fixed(DenseMatrix::identity(3), vec![0.0; 3], Activation::Identity),
            ],
        );
        assert!(matches!(bad, Err(Error::Shape(_))));
        assert!(LayerSpec::adapted(2, 3, 3, Activation::Identity)
            .validate()
            .is_err());
    }

    #[test]
    fn init_starts_at_base_model() {
        let topo = [LayerSpec::adapted(3, 2, 1, Activation::Identity)];
        let net = Network::init(Task::Regression, &topo, 9).unwrap();
        assert!(net.layers()[0]
            .a()
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(net, Network::init(Task::Regression, &topo, 9).unwrap());
        assert_ne!(net, Network::init(Task::Regression, &topo, 10).unwrap());
    }

    #[test]
    fn trainable_roundtrip() {
        let topo = [
            LayerSpec::adapted(3, 4, 2, Activation::Tanh),
            LayerSpec::fixed(4, 2, Activation::Identity),
        ];
        let mut net = Network::init(Task::Regression, &topo, 2).unwrap();
        assert_eq!(net.trainable_len(), 4 * 2 + 2 * 3 + 4 + 2);
        let p: Vec<f64> = (0..net.trainable_len()).map(|i| i as f64).collect();
        net.set_trainable_params(&p).unwrap();
        assert_eq!(net.trainable_params(), p);
        assert!(net.set_trainable_params(&p[1..]).is_err());
    }
}
