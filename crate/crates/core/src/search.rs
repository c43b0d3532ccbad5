//! Selection of the posterior scale `σq`.
//!
//! Both searches look for the largest `σq` whose anchor metric stays within
//! a tolerance `ε` of the deterministic value `p0`. The bisection probes one
//! midpoint per round; the grid variant evaluates a fixed list of scales and
//! interpolates the metric curve piecewise-linearly.
//!
//! Each probe re-evaluates the metric with the same seed, so the noise draws
//! are shared across scales and the metric is a smooth function of `σq`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterSet, PosteriorFamily};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate, AdapterState, EvalConfig, McConvention, MetricKind, DEFAULT_MC_SAMPLES,
};
use crate::netcore::Network;

/// Scales probed by the grid search when none are given.
pub const DEFAULT_GRID: [f64; 8] = [0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToleranceMode {
    /// `ε = epsilon · |p0|`.
    RelativeFraction,
    /// `ε = epsilon`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub metric: MetricKind,
    pub tolerance_mode: ToleranceMode,
    pub epsilon: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub max_rounds: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub family: PosteriorFamily,
    pub convention: McConvention,
}

impl SearchConfig {
    /// Defaults for a metric: relative tolerance of 1% for accuracy and 0.3%
    /// otherwise, bracket `[0.001, 0.015]`, five rounds, ten samples.
    pub fn for_metric(metric: MetricKind) -> Self {
        Self {
            metric,
            tolerance_mode: ToleranceMode::RelativeFraction,
            epsilon: if metric == MetricKind::Acc {
                0.01
            } else {
                0.003
            },
            bracket_lo: 0.001,
            bracket_hi: 0.015,
            max_rounds: 5,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            family: PosteriorFamily::LowRankIsotropic,
            convention: McConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bracket_lo >= 0.0
            && self.bracket_lo < self.bracket_hi
            && self.bracket_hi.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "bracket [{}, {}] must satisfy 0 <= lo < hi",
                self.bracket_lo, self.bracket_hi
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Absolute tolerance for a baseline value.
    pub fn resolve_epsilon(&self, p0: f64) -> f64 {
        match self.tolerance_mode {
            ToleranceMode::RelativeFraction => self.epsilon * p0.abs(),
            ToleranceMode::Absolute => self.epsilon,
        }
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            mc_samples: self.mc_samples,
            seed: self.seed,
            convention: self.convention,
        }
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::for_metric(MetricKind::Nll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sigma_q: f64,
    pub metric_value: f64,
    pub accepted: bool,
    /// Bracket after this round.
    pub lo: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub p0: f64,
    pub epsilon_abs: f64,
    pub probes: Vec<Probe>,
    pub result_sigma: f64,
    /// Set when no probe was accepted and the result fell back to the lower
    /// bracket end.
    pub no_acceptance: bool,
}

/// Bisection on an arbitrary metric curve `metric(σ)`.
pub fn binary_search_with<F>(p0: f64, cfg: &SearchConfig, mut metric: F) -> Result<SearchTrace>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    if !p0.is_finite() {
        return Err(Error::NonFinite(format!("baseline metric p0 = {p0}")));
    }
    let eps = cfg.resolve_epsilon(p0);
    let mut lo = cfg.bracket_lo;
    let mut width = cfg.bracket_hi - cfg.bracket_lo;
    let mut probes = Vec::with_capacity(cfg.max_rounds);
    for _ in 0..cfg.max_rounds {
        width *= 0.5;
        let sigma = lo + width;
        let value = metric(sigma)?;
        let accepted = (value - p0).abs() < eps;
        if accepted {
            lo = sigma;
        }
        probes.push(Probe {
            sigma_q: sigma,
            metric_value: value,
            accepted,
            lo,
            width,
        });
    }
    Ok(SearchTrace {
        p0,
        epsilon_abs: eps,
        no_acceptance: !probes.iter().any(|p| p.accepted),
        probes,
        result_sigma: lo,
    })
}

fn baseline(net: &Network, anchor: &Dataset, cfg: &SearchConfig) -> Result<f64> {
    let p0 = evaluate(
        net,
        AdapterState::Deterministic,
        anchor,
        cfg.metric,
        &cfg.eval_config(),
    )?
    .value;
    if !p0.is_finite() {
        return Err(Error::NonFinite(format!("baseline metric p0 = {p0}")));
    }
    Ok(p0)
}

fn metric_at(
    set: &AdapterSet,
    net: &Network,
    anchor: &Dataset,
    cfg: &SearchConfig,
    sigma: f64,
) -> Result<f64> {
    let scaled = set.with_sigma(sigma)?;
    let state = AdapterState::Bayesian {
        set: &scaled,
        family: cfg.family,
    };
    Ok(evaluate(net, state, anchor, cfg.metric, &cfg.eval_config())?.value)
}

/// Bisection for the largest `σq` keeping the anchor metric within tolerance.
pub fn binary_search_sigma(
    set: &AdapterSet,
    net: &Network,
    anchor: &Dataset,
    cfg: &SearchConfig,
) -> Result<SearchTrace> {
    cfg.validate()?;
    if anchor.is_empty() {
        return Err(Error::Empty("anchor dataset".into()));
    }
    let p0 = baseline(net, anchor, cfg)?;
    binary_search_with(p0, cfg, |sigma| metric_at(set, net, anchor, cfg, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub sigma_star: f64,
    pub p0: f64,
    /// Metric value the interpolation aims for.
    pub target: f64,
    /// `(σq, metric)` per grid point, in grid order.
    pub probes: Vec<(f64, f64)>,
    /// The target lies outside the observed metric range and the result was
    /// clamped to a grid end.
    pub clamped: bool,
}

/// Metric value at which the tolerance is used up.
pub fn degradation_target(metric: MetricKind, p0: f64, eps: f64) -> f64 {
    if metric.higher_is_better() {
        p0 - eps
    } else {
        p0 + eps
    }
}

/// Inverts the piecewise-linear curve through `(grid[k], values[k])` at
/// `target`, taking the first segment along which the metric reaches it.
/// Returns `(σ, clamped)`.
pub fn interpolate_sigma(
    grid: &[f64],
    values: &[f64],
    target: f64,
    higher_is_better: bool,
) -> Result<(f64, bool)> {
    check_grid(grid)?;
    if values.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} values for {} grid points",
            values.len(),
            grid.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("grid metric value {v}")));
    }
    let reached = |v: f64| {
        if higher_is_better {
            v <= target
        } else {
            v >= target
        }
    };
    let Some(k) = values.iter().position(|&v| reached(v)) else {
        return Ok((grid[grid.len() - 1], true));
    };
    if values[k] == target {
        return Ok((grid[k], false));
    }
    if k == 0 {
        return Ok((grid[0], true));
    }
    let (s0, s1) = (grid[k - 1], grid[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    Ok((s0 + (target - v0) * (s1 - s0) / (v1 - v0), false))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidConfig(
            "grid needs at least two points".into(),
        ));
    }
    if grid.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidConfig(
            "grid must be finite, non-negative and strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Grid evaluation followed by piecewise-linear inversion at the tolerance
/// boundary. `target_drop` overrides the tolerance resolved from `cfg`.
pub fn grid_interpolated_sigma(
    set: &AdapterSet,
    net: &Network,
    anchor: &Dataset,
    grid: &[f64],
    target_drop: Option<f64>,
    cfg: &SearchConfig,
) -> Result<GridOutcome> {
    check_grid(grid)?;
    if cfg.mc_samples == 0 {
        return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
    }
    if anchor.is_empty() {
        return Err(Error::Empty("anchor dataset".into()));
    }
    let p0 = baseline(net, anchor, cfg)?;
    let values = grid
        .par_iter()
        .map(|&sigma| metric_at(set, net, anchor, cfg, sigma))
        .collect::<Result<Vec<_>>>()?;
    grid_from_values(
        cfg.metric,
        p0,
        grid,
        &values,
        target_drop.unwrap_or_else(|| cfg.resolve_epsilon(p0)),
    )
}

/// Grid inversion from precomputed metric values.
pub fn grid_from_values(
    metric: MetricKind,
    p0: f64,
    grid: &[f64],
    values: &[f64],
    drop: f64,
) -> Result<GridOutcome> {
    let target = degradation_target(metric, p0, drop);
    let (sigma_star, clamped) = interpolate_sigma(grid, values, target, metric.higher_is_better())?;
    Ok(GridOutcome {
        sigma_star,
        p0,
        target,
        probes: grid.iter().copied().zip(values.iter().copied()).collect(),
        clamped,
    })
}
