//! Synthetic datasets, anchor selection and pseudo-labelling.

use crate::error::{Error, Result};
use crate::netcore::{Network, Task};
use crate::rng::{tag, Stream};

/// Default anchor-set size; clamped to the dataset size for small toys.
pub const DEFAULT_ANCHOR_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Inputs with optional targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task: Task,
    inputs: Vec<Vec<f64>>,
    targets: Option<Targets>,
    class_count: usize,
}

impl Dataset {
    pub fn regression(inputs: Vec<Vec<f64>>, targets: Option<Vec<f64>>) -> Result<Self> {
        Self::new(Task::Regression, inputs, targets.map(Targets::Values), 0)
    }

    pub fn classification(
        inputs: Vec<Vec<f64>>,
        targets: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        Self::new(
            Task::Classification,
            inputs,
            targets.map(Targets::Classes),
            class_count,
        )
    }

    pub fn new(
        task: Task,
        inputs: Vec<Vec<f64>>,
        targets: Option<Targets>,
        class_count: usize,
    ) -> Result<Self> {
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::Shape("inputs have differing dimensions".into()));
            }
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset input".into()));
        }
        match (&targets, task) {
            (Some(t), _) if t.len() != inputs.len() => {
                return Err(Error::Shape(format!(
                    "{} targets for {} inputs",
                    t.len(),
                    inputs.len()
                )))
            }
            (Some(Targets::Values(v)), Task::Regression) => {
                if v.iter().any(|y| !y.is_finite()) {
                    return Err(Error::NonFinite("regression target".into()));
                }
            }
            (Some(Targets::Classes(c)), Task::Classification) => {
                if let Some(bad) = c.iter().find(|&&k| k >= class_count) {
                    return Err(Error::Domain(format!(
                        "class index {bad} >= class count {class_count}"
                    )));
                }
            }
            (None, _) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "target type does not match task".into(),
                ))
            }
        }
        if task == Task::Classification && class_count < 2 {
            return Err(Error::InvalidConfig(
                "classification needs at least 2 classes".into(),
            ));
        }
        Ok(Self {
            task,
            inputs,
            targets,
            class_count,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> Option<&Targets> {
        self.targets.as_ref()
    }

    pub fn class_targets(&self) -> Option<&[usize]> {
        match &self.targets {
            Some(Targets::Classes(c)) => Some(c),
            _ => None,
        }
    }

    pub fn value_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Some(Targets::Values(v)) => Some(v),
            _ => None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            task: self.task,
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: self.targets.as_ref().map(|t| t.select(idx)),
            class_count: self.class_count,
        }
    }

    pub fn without_targets(&self) -> Self {
        Self {
            targets: None,
            ..self.clone()
        }
    }
}

/// 20 points `x ~ U[-4, 4]`, `y = x³ + 9ε`, `ε ~ N(0, 1)`.
pub fn toy_cubic(seed: u64) -> Dataset {
    const SIZE: usize = 20;
    let mut xs = Stream::new(seed, &[tag::DATA, 0]);
    let mut noise = Stream::new(seed, &[tag::DATA, 1]);
    let mut inputs = Vec::with_capacity(SIZE);
    let mut targets = Vec::with_capacity(SIZE);
    for _ in 0..SIZE {
        let x = xs.uniform_in(-4.0, 4.0);
        inputs.push(vec![x]);
        targets.push(x.powi(3) + 9.0 * noise.normal());
    }
    Dataset::regression(inputs, Some(targets)).expect("finite toy data")
}

/// Centers of [`toy_blobs`]: evenly spaced on a circle so that neighbouring
/// centers are `separation` apart.
pub fn blob_centers(class_count: usize, separation: f64) -> Vec<[f64; 2]> {
    let radius = if class_count >= 2 {
        separation / (2.0 * (std::f64::consts::PI / class_count as f64).sin())
    } else {
        0.0
    };
    (0..class_count)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / class_count as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// Two-dimensional Gaussian clusters with unit covariance, labelled by the
/// generating cluster. Examples are ordered class by class.
pub fn toy_blobs(
    class_count: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count < 2 {
        return Err(Error::InvalidConfig(
            "toy_blobs needs at least 2 classes".into(),
        ));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::Domain(format!("separation {separation}")));
    }
    let centers = blob_centers(class_count, separation);
    let mut s = Stream::new(seed, &[tag::DATA, 2]);
    let mut inputs = Vec::with_capacity(class_count * per_class);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            inputs.push(vec![c[0] + s.normal(), c[1] + s.normal()]);
            labels.push(k);
        }
    }
    Dataset::classification(inputs, Some(labels), class_count)
}

/// Indices of a uniform sample without replacement (partial Fisher-Yates).
pub fn select_anchor_indices(population: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size > population {
        return Err(Error::InvalidConfig(format!(
            "anchor size {size} exceeds dataset size {population}"
        )));
    }
    let mut s = Stream::new(seed, &[tag::ANCHOR]);
    let mut idx: Vec<usize> = (0..population).collect();
    for i in 0..size {
        let j = i + s.below(population - i);
        idx.swap(i, j);
    }
    idx.truncate(size);
    Ok(idx)
}

pub fn select_anchor(dataset: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    let idx = select_anchor_indices(dataset.len(), size, seed)?;
    Ok(dataset.subset(&idx))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Replaces the targets with the deterministic model's argmax predictions.
pub fn pseudo_label(net: &Network, unlabeled: &Dataset) -> Result<Dataset> {
    if net.task() != Task::Classification || unlabeled.task() != Task::Classification {
        return Err(Error::Unsupported(
            "pseudo-labels need a classification model".into(),
        ));
    }
    let labels = unlabeled
        .inputs()
        .iter()
        .map(|x| net.predict(x).map(|logits| argmax(&logits)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::classification(unlabeled.inputs().to_vec(), Some(labels), net.output_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::netcore::{Activation, Layer, LayerSpec};

    #[test]
    fn toy_cubic_shape_and_support() {
        let d = toy_cubic(3);
        assert_eq!(d.len(), 20);
        assert!(d.inputs().iter().all(|x| (-4.0..=4.0).contains(&x[0])));
        assert_eq!(d, toy_cubic(3));
        assert_ne!(d, toy_cubic(4));
    }

    #[test]
    fn toy_cubic_noise_is_centered() {
        // Monte-Carlo oracle on the residual y - x³ over many regenerations.
        let n_sets = 5000;
        let mut residuals = Vec::with_capacity(n_sets * 20);
        for seed in 0..n_sets as u64 {
            let d = toy_cubic(seed);
            for (x, y) in d.inputs().iter().zip(d.value_targets().unwrap()) {
                residuals.push(y - x[0].powi(3));
            }
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        assert!(mean.abs() <= 3.0 * 9.0 / n.sqrt(), "mean residual {mean}");
    }

    #[test]
    fn blobs_sizes_and_labels() {
        let d = toy_blobs(3, 1, 4.0, 1).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.class_targets().unwrap(), &[0, 1, 2]);
        assert!(toy_blobs(1, 5, 1.0, 1).is_err());
    }

    #[test]
    fn separated_blobs_are_nearly_separable() {
        let d = toy_blobs(2, 500, 10.0, 5).unwrap();
        let centers = blob_centers(2, 10.0);
        let correct = d
            .inputs()
            .iter()
            .zip(d.class_targets().unwrap())
            .filter(|(x, &y)| {
                let dist: Vec<f64> = centers
                    .iter()
                    .map(|c| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))
                    .collect();
                let nearest = if dist[0] <= dist[1] { 0 } else { 1 };
                nearest == y
            })
            .count();
        assert!(correct as f64 / d.len() as f64 >= 0.99);
    }

    #[test]
    fn zero_separation_is_chance() {
        // All centers coincide, so the nearest-centroid rule picks class 0.
        let d = toy_blobs(4, 250, 0.0, 2).unwrap();
        let hits = d
            .class_targets()
            .unwrap()
            .iter()
            .filter(|&&y| y == 0)
            .count();
        assert!((hits as f64 / d.len() as f64 - 0.25).abs() < 1e-12);
        assert!(blob_centers(4, 0.0)
            .iter()
            .all(|c| c[0] == 0.0 && c[1] == 0.0));
    }

    #[test]
    fn anchor_full_size_is_permutation() {
        let mut idx = select_anchor_indices(10, 10, 1).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert!(select_anchor_indices(10, 0, 1).unwrap().is_empty());
        assert!(select_anchor_indices(3, 4, 1).is_err());
    }

    #[test]
    fn anchor_indices_unique() {
        for seed in 0..1000 {
            let mut idx = select_anchor_indices(50, 20, seed).unwrap();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 20);
        }
    }

    fn forcing_net(class: usize, classes: usize) -> Network {
        let spec = LayerSpec::fixed(2, classes, Activation::Identity);
        let bias = (0..classes)
            .map(|k| if k == class { 10.0 } else { -10.0 })
            .collect();
        let layer = Layer::new(spec, DenseMatrix::zeros(classes, 2), None, bias).unwrap();
        Network::new(Task::Classification, vec![layer]).unwrap()
    }

    #[test]
    fn pseudo_labels_follow_forced_class() {
        let data = toy_blobs(3, 10, 2.0, 1).unwrap().without_targets();
        let labelled = pseudo_label(&forcing_net(2, 3), &data).unwrap();
        assert!(labelled.class_targets().unwrap().iter().all(|&y| y == 2));
        assert_eq!(
            pseudo_label(&forcing_net(2, 3), &labelled).unwrap(),
            labelled
        );
    }

    #[test]
    fn pseudo_labels_match_brute_force_argmax() {
        let topo = [LayerSpec::fixed(2, 4, Activation::Identity)];
        let net = Network::init(Task::Classification, &topo, 8).unwrap();
        let data = toy_blobs(4, 25, 1.0, 3).unwrap();
        let labelled = pseudo_label(&net, &data).unwrap();
        for (x, &y) in data.inputs().iter().zip(labelled.class_targets().unwrap()) {
            let logits = net.predict(x).unwrap();
            let mut best = (0, f64::NEG_INFINITY);
            for (k, &v) in logits.iter().enumerate() {
                if v > best.1 {
                    best = (k, v);
                }
            }
            assert_eq!(y, best.0);
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn pseudo_label_rejects_regression() {
        let topo = [LayerSpec::fixed(1, 1, Activation::Identity)];
        let net = Network::init(Task::Regression, &topo, 1).unwrap();
        assert!(matches!(
            pseudo_label(&net, &toy_cubic(1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::regression(vec![vec![1.0]], Some(vec![])).is_err());
        assert!(Dataset::classification(vec![vec![1.0]], Some(vec![2]), 2).is_err());
        assert!(Dataset::regression(vec![vec![1.0], vec![1.0, 2.0]], None).is_err());
    }
}
