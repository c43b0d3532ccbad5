//! Evaluation metrics and their Monte-Carlo estimates under a Bayesianized
//! adapter set.
//!
//! In Bayesian mode the default estimator averages the class probabilities of
//! the weight samples first and scores the averaged predictive
//! ([`McConvention::PredictiveThenMetric`]). Embedding norms and squared
//! errors are always averaged per sample. Every sample index `k` uses the
//! same noise key for a given seed, so re-evaluating at a different `σq`
//! rescales the same standard-normal draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterSet, NoisePlan, PosteriorFamily};
use crate::data::{argmax, Dataset, Targets};
use crate::error::{Error, Result};
use crate::netcore::{softmax, Network, Task};
use crate::numeric::{pairwise_mean, shifted_mean};

/// Probabilities are clamped to this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
pub const ECE_BINS: usize = 15;
pub const DEFAULT_MC_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "NLL")]
    Nll,
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "ECE")]
    Ece,
    EmbeddingNorm,
    #[serde(rename = "MSE")]
    Mse,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Nll,
        MetricKind::Acc,
        MetricKind::Ece,
        MetricKind::EmbeddingNorm,
        MetricKind::Mse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Nll => "NLL",
            MetricKind::Acc => "ACC",
            MetricKind::Ece => "ECE",
            MetricKind::EmbeddingNorm => "EmbeddingNorm",
            MetricKind::Mse => "MSE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Only accuracy improves upward.
    pub fn higher_is_better(self) -> bool {
        self == MetricKind::Acc
    }

    pub fn needs_labels(self) -> bool {
        self != MetricKind::EmbeddingNorm
    }

    /// Task the metric is defined for; `None` when any task works.
    pub fn task(self) -> Option<Task> {
        match self {
            MetricKind::Nll | MetricKind::Acc | MetricKind::Ece => Some(Task::Classification),
            MetricKind::Mse => Some(Task::Regression),
            MetricKind::EmbeddingNorm => None,
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One calibration bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EceBin {
    pub accuracy: f64,
    pub confidence: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub value: f64,
    /// Monte-Carlo samples behind the value; 0 for a deterministic evaluation.
    pub sample_count: usize,
    pub bin_detail: Option<Vec<EceBin>>,
}

/// How Monte-Carlo samples are combined for NLL, ACC and ECE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum McConvention {
    /// Score the sample-averaged predictive distribution.
    #[default]
    PredictiveThenMetric,
    /// Score every sample separately and average the scores.
    MetricThenAverage,
}

/// Which weights a forward pass uses.
#[derive(Debug, Clone, Copy)]
pub enum AdapterState<'a> {
    Deterministic,
    Bayesian {
        set: &'a AdapterSet,
        family: PosteriorFamily,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub mc_samples: usize,
    pub seed: u64,
    pub convention: McConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            convention: McConvention::default(),
        }
    }
}

/// Mean negative log-probability of the true class.
pub fn nll(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Empty("nll needs at least one probability".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1]")));
    }
    Ok(nll_floored(probabilities))
}

fn nll_floored(probabilities: &[f64]) -> f64 {
    let terms: Vec<f64> = probabilities
        .iter()
        .map(|p| -p.max(PROB_FLOOR).ln())
        .collect();
    pairwise_mean(&terms)
}

/// Bin of a confidence under `(k/bins, (k+1)/bins]` membership, with 0 in
/// the first bin.
fn bin_index(c: f64, bins: usize) -> usize {
    let nb = bins as f64;
    let mut b = ((c * nb).ceil() as usize).saturating_sub(1).min(bins - 1);
    while b > 0 && c <= b as f64 / nb {
        b -= 1;
    }
    while b + 1 < bins && c > (b + 1) as f64 / nb {
        b += 1;
    }
    b
}

/// Expected calibration error over `bins` equal-width confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<MetricReport> {
    if confidences.len() != correct.len() {
        return Err(Error::Shape(format!(
            "{} confidences but {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if confidences.is_empty() {
        return Err(Error::Empty("ece needs at least one prediction".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("ece needs at least one bin".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Domain(format!("confidence {c} outside [0, 1]")));
    }
    let mut hits = vec![0.0; bins];
    let mut conf = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = bin_index(c, bins);
        count[b] += 1;
        conf[b] += c;
        if ok {
            hits[b] += 1.0;
        }
    }
    let n = confidences.len() as f64;
    let mut value = 0.0;
    let mut detail = Vec::with_capacity(bins);
    for b in 0..bins {
        if count[b] == 0 {
            detail.push(EceBin {
                accuracy: 0.0,
                confidence: 0.0,
                count: 0,
            });
            continue;
        }
        let size = count[b] as f64;
        let accuracy = hits[b] / size;
        let confidence = conf[b] / size;
        value += (size / n) * (accuracy - confidence).abs();
        detail.push(EceBin {
            accuracy,
            confidence,
            count: count[b],
        });
    }
    Ok(MetricReport {
        kind: MetricKind::Ece,
        value,
        sample_count: 0,
        bin_detail: Some(detail),
    })
}

/// Per-example outputs of every Monte-Carlo sample.
enum SampleValues {
    /// `[sample][class]` probabilities.
    Probabilities(Vec<Vec<f64>>),
    /// One scalar per sample (squared error or embedding norm).
    Scalars(Vec<f64>),
}

fn check_compat(net: &Network, data: &Dataset, kind: MetricKind) -> Result<()> {
    if let Some(task) = kind.task() {
        if net.task() != task {
            return Err(Error::Unsupported(format!(
                "{kind} is not defined for {} models",
                net.task().name()
            )));
        }
    }
    if data.task() != net.task() {
        return Err(Error::InvalidConfig(format!(
            "dataset task {} does not match model task {}",
            data.task().name(),
            net.task().name()
        )));
    }
    if kind.needs_labels() && data.targets().is_none() {
        return Err(Error::MissingLabels);
    }
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset".into()));
    }
    Ok(())
}

fn noise_plan<'a>(state: &AdapterState<'a>, seed: u64, sample: usize) -> NoisePlan<'a> {
    match state {
        AdapterState::Deterministic => NoisePlan::empty(),
        AdapterState::Bayesian { set, family } => {
            set.noise_plan(*family, seed, sample as u64, None)
        }
    }
}

fn example_values(
    net: &Network,
    state: &AdapterState<'_>,
    x: &[f64],
    target: Option<f64>,
    kind: MetricKind,
    samples: usize,
    seed: u64,
) -> Result<SampleValues> {
    match kind {
        MetricKind::Nll | MetricKind::Acc | MetricKind::Ece => {
            let probs = (0..samples)
                .map(|s| {
                    net.forward(x, &noise_plan(state, seed, s))
                        .map(|z| softmax(&z))
                })
                .collect::<Result<_>>()?;
            Ok(SampleValues::Probabilities(probs))
        }
        MetricKind::Mse => {
            let y = target.ok_or(Error::MissingLabels)?;
            let errs = (0..samples)
                .map(|s| {
                    net.forward(x, &noise_plan(state, seed, s))
                        .map(|z| z.iter().map(|v| (v - y) * (v - y)).sum::<f64>())
                })
                .collect::<Result<_>>()?;
            Ok(SampleValues::Scalars(errs))
        }
        MetricKind::EmbeddingNorm => {
            let norms = (0..samples)
                .map(|s| {
                    net.embed(x, &noise_plan(state, seed, s))
                        .map(|h| h.iter().map(|v| v * v).sum::<f64>().sqrt())
                })
                .collect::<Result<_>>()?;
            Ok(SampleValues::Scalars(norms))
        }
    }
}

/// Scores a classification predictive given per-example probability vectors.
fn score_probabilities(
    kind: MetricKind,
    probs: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Option<Vec<EceBin>>)> {
    match kind {
        MetricKind::Nll => {
            let p: Vec<f64> = probs.iter().zip(labels).map(|(p, &y)| p[y]).collect();
            Ok((nll_floored(&p), None))
        }
        MetricKind::Acc => {
            let hits: Vec<f64> = probs
                .iter()
                .zip(labels)
                .map(|(p, &y)| if argmax(p) == y { 1.0 } else { 0.0 })
                .collect();
            Ok((pairwise_mean(&hits), None))
        }
        MetricKind::Ece => {
            let conf: Vec<f64> = probs.iter().map(|p| p[argmax(p)].clamp(0.0, 1.0)).collect();
            let correct: Vec<bool> = probs
                .iter()
                .zip(labels)
                .map(|(p, &y)| argmax(p) == y)
                .collect();
            let report = ece(&conf, &correct, ECE_BINS)?;
            Ok((report.value, report.bin_detail))
        }
        _ => unreachable!("not a probability metric"),
    }
}

/// Metric value on `data` under deterministic or Bayesian weights.
pub fn evaluate(
    net: &Network,
    state: AdapterState<'_>,
    data: &Dataset,
    kind: MetricKind,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    check_compat(net, data, kind)?;
    let samples = match state {
        AdapterState::Deterministic => 1,
        AdapterState::Bayesian { set, .. } => {
            if cfg.mc_samples == 0 {
                return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
            }
            if set.is_empty() {
                return Err(Error::Unsupported(
                    "Bayesian evaluation without adapters".into(),
                ));
            }
            cfg.mc_samples
        }
    };
    let sample_count = match state {
        AdapterState::Deterministic => 0,
        AdapterState::Bayesian { .. } => samples,
    };

    let values_targets = data.value_targets();
    let per_example: Vec<SampleValues> = data
        .inputs()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let target = values_targets.map(|v| v[i]);
            example_values(net, &state, x, target, kind, samples, cfg.seed)
        })
        .collect::<Result<_>>()?;

    let (value, bin_detail) = match kind {
        MetricKind::Mse | MetricKind::EmbeddingNorm => {
            let means: Vec<f64> = per_example
                .iter()
                .map(|v| match v {
                    SampleValues::Scalars(s) => shifted_mean(s),
                    SampleValues::Probabilities(_) => unreachable!(),
                })
                .collect();
            (pairwise_mean(&means), None)
        }
        _ => {
            let labels = match data.targets() {
                Some(Targets::Classes(c)) => c.as_slice(),
                _ => return Err(Error::MissingLabels),
            };
            let probs: Vec<&Vec<Vec<f64>>> = per_example
                .iter()
                .map(|v| match v {
                    SampleValues::Probabilities(p) => p,
                    SampleValues::Scalars(_) => unreachable!(),
                })
                .collect();
            match cfg.convention {
                McConvention::PredictiveThenMetric => {
                    let averaged: Vec<Vec<f64>> =
                        probs.iter().map(|p| average_columns(p)).collect();
                    score_probabilities(kind, &averaged, labels)?
                }
                McConvention::MetricThenAverage => {
                    let mut scores = Vec::with_capacity(samples);
                    for s in 0..samples {
                        let single: Vec<Vec<f64>> = probs.iter().map(|p| p[s].clone()).collect();
                        scores.push(score_probabilities(kind, &single, labels)?.0);
                    }
                    (shifted_mean(&scores), None)
                }
            }
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{kind} evaluated to {value}")));
    }
    let bin_detail = if kind == MetricKind::Ece {
        Some(bin_detail.unwrap_or_else(|| {
            vec![
                EceBin {
                    accuracy: 0.0,
                    confidence: 0.0,
                    count: 0,
                };
                ECE_BINS
            ]
        }))
    } else {
        None
    };
    Ok(MetricReport {
        kind,
        value,
        sample_count,
        bin_detail,
    })
}

/// Per-column shifted mean of equally long rows.
pub(crate) fn average_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows[0].len();
    (0..width)
        .map(|k| {
            let column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            shifted_mean(&column)
        })
        .collect()
}
