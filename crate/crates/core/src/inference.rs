//! Monte-Carlo prediction with sampled adapter weights.
//!
//! Sample `k` of every input draws its noise from the key `(seed, layer, k)`,
//! so the full-model and last-layer modes see identical draws on the layers
//! they share.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterSet, NoisePlan, PosteriorFamily};
use crate::error::{Error, Result};
use crate::metrics::{average_columns, DEFAULT_MC_SAMPLES};
use crate::netcore::{softmax, Network, Task};
use crate::numeric::sample_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PredictionMode {
    /// Every adapted layer is sampled.
    #[default]
    FullModel,
    /// Only the last adapted layer is sampled.
    LastLayerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub mc_samples: usize,
    pub seed: u64,
    pub family: PosteriorFamily,
    pub mode: PredictionMode,
    /// Keep every sample's output in the summary.
    pub keep_samples: bool,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            family: PosteriorFamily::default(),
            mode: PredictionMode::default(),
            keep_samples: false,
        }
    }
}

/// Per-input Monte-Carlo statistics.
///
/// A prediction is the output value for regression and the softmax
/// probability vector for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// Sample-averaged class probabilities (classification only).
    pub probabilities: Option<Vec<Vec<f64>>>,
    /// `[input][sample]` predictions when requested.
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
    /// How many times the layers below the last adapted layer were run.
    pub prefix_evaluations: usize,
}

fn validate(
    net: &Network,
    set: &AdapterSet,
    inputs: &[Vec<f64>],
    cfg: &PredictionConfig,
) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::Empty("prediction inputs".into()));
    }
    if cfg.mc_samples == 0 {
        return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
    }
    let last = set
        .last_layer()
        .ok_or_else(|| Error::Unsupported("prediction needs at least one adapted layer".into()))?;
    if last >= net.layers().len() {
        return Err(Error::Shape(format!(
            "adapter for layer {last} but network has {}",
            net.layers().len()
        )));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != net.input_dim()) {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    Ok(last)
}

fn prediction(task: Task, out: Vec<f64>) -> Vec<f64> {
    match task {
        Task::Regression => out,
        Task::Classification => softmax(&out),
    }
}

fn summarize(
    task: Task,
    per_input: Vec<Vec<Vec<f64>>>,
    keep: bool,
    prefix: usize,
) -> PredictiveSummary {
    let mut mean = Vec::with_capacity(per_input.len());
    let mut std = Vec::with_capacity(per_input.len());
    for samples in &per_input {
        let m = average_columns(samples);
        let s = (0..m.len())
            .map(|k| {
                let column: Vec<f64> = samples.iter().map(|r| r[k]).collect();
                sample_std(&column, m[k])
            })
            .collect();
        mean.push(m);
        std.push(s);
    }
    PredictiveSummary {
        probabilities: (task == Task::Classification).then(|| mean.clone()),
        mean,
        std,
        samples: keep.then_some(per_input),
        prefix_evaluations: prefix,
    }
}

fn plan<'a>(
    set: &'a AdapterSet,
    cfg: &PredictionConfig,
    sample: usize,
    last: usize,
) -> NoisePlan<'a> {
    let only = (cfg.mode == PredictionMode::LastLayerOnly).then_some(last);
    set.noise_plan(cfg.family, cfg.seed, sample as u64, only)
}

/// Naive Monte-Carlo prediction: one complete forward pass per sample.
pub fn mc_predict(
    net: &Network,
    set: &AdapterSet,
    inputs: &[Vec<f64>],
    cfg: &PredictionConfig,
) -> Result<PredictiveSummary> {
    let last = validate(net, set, inputs, cfg)?;
    let prefix = AtomicUsize::new(0);
    let per_input: Vec<Vec<Vec<f64>>> = inputs
        .par_iter()
        .map(|x| {
            (0..cfg.mc_samples)
                .map(|s| {
                    prefix.fetch_add(1, Ordering::Relaxed);
                    net.forward(x, &plan(set, cfg, s, last))
                        .map(|out| prediction(net.task(), out))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(
        net.task(),
        per_input,
        cfg.keep_samples,
        prefix.into_inner(),
    ))
}

/// Last-layer prediction that runs the deterministic prefix once per input
/// and reuses its activation for every sample.
pub fn last_layer_fast_predict(
    net: &Network,
    set: &AdapterSet,
    inputs: &[Vec<f64>],
    cfg: &PredictionConfig,
) -> Result<PredictiveSummary> {
    if cfg.mode != PredictionMode::LastLayerOnly {
        return Err(Error::InvalidConfig(
            "the fast path needs LastLayerOnly mode".into(),
        ));
    }
    let last = validate(net, set, inputs, cfg)?;
    let final_layer = net.layers().len() - 1;
    if last != final_layer || !net.layers()[final_layer].spec().is_adapted() {
        return Err(Error::Unsupported(
            "the fast path needs an adapted final layer".into(),
        ));
    }
    let prefix = AtomicUsize::new(0);
    let per_input: Vec<Vec<Vec<f64>>> = inputs
        .par_iter()
        .map(|x| {
            prefix.fetch_add(1, Ordering::Relaxed);
            let cached = net.run_layers(0..last, x.clone(), &NoisePlan::empty());
            (0..cfg.mc_samples)
                .map(|s| {
                    let out =
                        net.run_layers(last..last + 1, cached.clone(), &plan(set, cfg, s, last));
                    Ok(prediction(net.task(), out))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(
        net.task(),
        per_input,
        cfg.keep_samples,
        prefix.into_inner(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub x: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Mean and ±1 standard deviation of a scalar regression model on a 1-D grid.
pub fn prediction_band(
    net: &Network,
    set: &AdapterSet,
    x_grid: &[f64],
    cfg: &PredictionConfig,
) -> Result<Vec<BandRow>> {
    if net.task() != Task::Regression {
        return Err(Error::Unsupported(
            "prediction bands need a regression model".into(),
        ));
    }
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::Unsupported(
            "prediction bands need a scalar-in, scalar-out model".into(),
        ));
    }
    let inputs: Vec<Vec<f64>> = x_grid.iter().map(|&x| vec![x]).collect();
    let summary = mc_predict(net, set, &inputs, cfg)?;
    Ok(x_grid
        .iter()
        .zip(summary.mean.iter().zip(&summary.std))
        .map(|(&x, (m, s))| BandRow {
            x,
            mean: m[0],
            lower: m[0] - s[0],
            upper: m[0] + s[0],
        })
        .collect())
}
