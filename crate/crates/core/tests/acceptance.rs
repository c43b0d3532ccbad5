//! Acceptance suite: thirteen end-to-end criteria, each with a runtime
//! budget. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! fails.

use std::time::{Duration, Instant};

use tfb_core::adapter::{bayesianize, AdapterSet, PosteriorFamily};
use tfb_core::data::{toy_cubic, Dataset};
use tfb_core::inference::{
    last_layer_fast_predict, mc_predict, prediction_band, PredictionConfig, PredictionMode,
};
use tfb_core::linalg::DenseMatrix;
use tfb_core::metrics::{ece, evaluate, nll, AdapterState, EvalConfig, McConvention, MetricKind};
use tfb_core::netcore::{
    loss_and_grads, train_adam, training_mse, Activation, LayerSpec, LossKind, Network, Task,
    TrainConfig,
};
use tfb_core::numeric::linspace;
use tfb_core::oracle::{
    kl_lowrank_closed_form, random_adapter, random_kl_case, reparameterization_gap, restricted_kl,
    vi_equivalence_sweep, KlParams,
};
use tfb_core::rng::Stream;
use tfb_core::search::{
    binary_search_with, grid_from_values, SearchConfig, ToleranceMode, DEFAULT_GRID,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

/// Orthonormal basis of ℝ^m whose first columns are `u`'s, by Gram-Schmidt
/// against the standard basis.
fn complete_basis(u: &DenseMatrix) -> DenseMatrix {
    let m = u.rows();
    let mut cols: Vec<Vec<f64>> = (0..u.cols()).map(|j| u.column(j)).collect();
    for e in 0..m {
        if cols.len() == m {
            break;
        }
        let mut v: Vec<f64> = (0..m).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            for c in &cols {
                let proj: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(vi, ci)| *vi -= proj * ci);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.iter().map(|x| x / norm).collect());
        }
    }
    DenseMatrix::from_fn(m, m, |i, j| cols[j][i])
}

fn covariance_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let lora = random_adapter(seed, 6, 4, 3);
        for sigma in [0.1, 1.0, 3.0] {
            let bayes = e2s(bayesianize(&lora, sigma))?;
            let (m, n, r) = (bayes.out_dim(), bayes.in_dim(), bayes.rank());
            let bp = bayes.b_prime();
            let omega = bayes.omega(PosteriorFamily::LowRankIsotropic);
            let u = DenseMatrix::from_fn(m, r, |i, k| bp.get(i, k) / bayes.d()[k]);
            let q = complete_basis(&u);
            // Column j of W is B′ a′_j, so the covariance is block diagonal
            // with blocks B′ diag(Ω_{:j}²) B′ᵀ.
            for j in 0..n {
                let var: Vec<f64> = (0..r).map(|k| omega.get(k, j).powi(2)).collect();
                let block = naive_matmul(&bp.scale_columns(&var), &bp.transpose());
                let rotated = naive_matmul(&naive_matmul(&q.transpose(), &block), &q);
                let target =
                    DenseMatrix::from_fn(
                        m,
                        m,
                        |a, b| if a == b && a < r { sigma * sigma } else { 0.0 },
                    );
                worst = worst.max(rotated.max_abs_diff(&target));
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max abs error {worst:e}"))?;
    Ok(format!("300 cases, max abs error {worst:.2e}"))
}

fn regrouping() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let lora = random_adapter(seed, 8, 8, 4);
        let bayes = e2s(bayesianize(&lora, 1.0))?;
        let regrouped = naive_matmul(bayes.b_prime(), bayes.m_mean());
        let original = naive_matmul(lora.b(), lora.a());
        worst = worst.max(regrouped.max_abs_diff(&original) / original.max_abs());
    }
    ensure(worst <= 1e-10, || format!("relative error {worst:e}"))?;
    Ok(format!("1000 adapters, relative error {worst:.2e}"))
}

fn kl_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at_prior: f64 = 0.0;
    for seed in 0..200u64 {
        let (bayes, params) = e2s(random_kl_case(seed))?;
        let general = e2s(restricted_kl(&bayes, params.sigma_p))?;
        let closed = e2s(kl_lowrank_closed_form(&params))?;
        worst = worst.max((general - closed).abs() / closed.abs());
        let equal = e2s(bayes.with_sigma(params.sigma_p))?;
        at_prior = at_prior.max(e2s(restricted_kl(&equal, params.sigma_p))?.abs());
        at_prior = at_prior.max(
            e2s(kl_lowrank_closed_form(&KlParams {
                sigma_q: params.sigma_p,
                ..params
            }))?
            .abs(),
        );
    }
    ensure(worst <= 1e-8, || format!("relative error {worst:e}"))?;
    ensure(at_prior <= 1e-12, || {
        format!("KL at σq = σp is {at_prior:e}")
    })?;
    Ok(format!(
        "200 tuples, relative error {worst:.2e}, KL at the prior {at_prior:.1e}"
    ))
}

fn vi_equivalence() -> Outcome {
    let grid = linspace(0.0, 1.0, 10_000);
    let step = grid[1] - grid[0];
    let params = KlParams {
        sigma_q: 1.0,
        sigma_p: 1.0,
        n: 4,
        r: 2,
        lambda: 1.0,
    };
    let nr = (params.n * params.r) as f64;
    let mut worst: f64 = 0.0;
    for c in [0.5, 2.0] {
        let lambdas = [0.1, 1.0, 10.0];
        let rows = e2s(vi_equivalence_sweep(
            |s| c * s * s,
            &lambdas,
            &params,
            &grid,
        ))?;
        for (row, &lambda) in rows.iter().zip(&lambdas) {
            // Stationary point of c·σ² + λ·(nr/2)(σ² − 1 − ln σ²).
            let analytic = (lambda * nr / (2.0 * c + lambda * nr)).sqrt();
            let gap = (row.argmin_lagrangian - row.argmax_constrained).abs();
            ensure(gap <= step, || {
                format!("c={c} λ={lambda}: argmin and argmax differ by {gap:e}")
            })?;
            let off = (row.argmin_lagrangian - analytic).abs();
            ensure(off <= step, || {
                format!(
                    "c={c} λ={lambda}: argmin {} vs analytic {analytic}",
                    row.argmin_lagrangian
                )
            })?;
            worst = worst.max(gap);
        }
    }
    Ok(format!(
        "6 settings, largest gap {worst:.2e} (grid step {step:.2e})"
    ))
}

fn binary_search() -> Outcome {
    let mut cases = 0;
    for (lo, hi) in [(0.001, 0.015), (0.0, 1.0), (0.2, 3.7)] {
        for frac in [0.05, 0.3, 0.5, 0.77, 0.99] {
            for slope in [0.5, 4.0] {
                let star = lo + frac * (hi - lo);
                let p0 = 1.3;
                let cfg = SearchConfig {
                    tolerance_mode: ToleranceMode::Absolute,
                    epsilon: slope * (star - lo),
                    bracket_lo: lo,
                    bracket_hi: hi,
                    max_rounds: 5,
                    ..SearchConfig::default()
                };
                // Metric p0 + slope·(σ − lo): the constraint |p − p0| < ε holds
                // exactly for σ < star.
                let trace = e2s(binary_search_with(p0, &cfg, |s| Ok(p0 + slope * (s - lo))))?;
                // The bound is attained when `star` is a dyadic point of the
                // bracket; allow for the rounding of that distance.
                let tol = (hi - lo) / 32.0 + 4.0 * f64::EPSILON * hi;
                ensure((trace.result_sigma - star).abs() <= tol, || {
                    format!(
                        "bracket [{lo}, {hi}] star {star}: result {}",
                        trace.result_sigma
                    )
                })?;
                for (k, probe) in trace.probes.iter().enumerate() {
                    let expected = (hi - lo) / 2f64.powi(k as i32 + 1);
                    ensure(probe.width == expected, || {
                        format!("round {}: width {} != {expected}", k + 1, probe.width)
                    })?;
                }
                ensure(trace.probes.len() == 5, || {
                    format!("{} rounds", trace.probes.len())
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} monotone metrics"))
}

fn grid_interpolation() -> Outcome {
    let mut worst: f64 = 0.0;
    for (metric, slope) in [
        (MetricKind::Nll, 3.0f64),
        (MetricKind::Ece, 0.4),
        (MetricKind::Acc, -2.0),
    ] {
        for star in [0.012, 0.0234, 0.031, 0.0499] {
            let p0 = 0.8;
            let eps = slope.abs() * star;
            let values: Vec<f64> = DEFAULT_GRID.iter().map(|s| p0 + slope * s).collect();
            let out = e2s(grid_from_values(metric, p0, &DEFAULT_GRID, &values, eps))?;
            ensure(!out.clamped, || format!("{metric} σ*={star}: clamped"))?;
            worst = worst.max((out.sigma_star - star).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("error {worst:e}"))?;
    Ok(format!("12 linear metrics, error {worst:.2e}"))
}

/// Reference seed and thresholds fixed by the pre-registered reference run
/// (seeds 0 to 7 all gave a ratio above 6.8 and a training MSE below 70).
const TOY_SEED: u64 = 7;
const TOY_RATIO: f64 = 2.0;
const TOY_MAX_MSE: f64 = 150.0;

fn toy_regression() -> Outcome {
    let data = toy_cubic(TOY_SEED);
    let topology = [
        LayerSpec::adapted(1, 16, 1, Activation::Relu),
        LayerSpec::adapted(16, 1, 1, Activation::Identity),
    ];
    let init = e2s(Network::init(Task::Regression, &topology, TOY_SEED))?;
    let cfg = TrainConfig {
        steps: 1000,
        lr: 0.1,
        seed: TOY_SEED,
        weight_decay: 0.0,
    };
    let net = e2s(train_adam(&init, &data, &cfg))?.net;
    let mse = e2s(training_mse(&net, &data))?;
    ensure(mse <= TOY_MAX_MSE, || {
        format!("training MSE {mse} above {TOY_MAX_MSE}")
    })?;
    let set = e2s(AdapterSet::bayesianize(&net.adapters(), 1.0))?;
    let pc = PredictionConfig {
        mc_samples: 10,
        seed: TOY_SEED,
        family: PosteriorFamily::FullRankIsotropic,
        ..PredictionConfig::default()
    };
    let band = e2s(prediction_band(&net, &set, &[-6.0, 0.0, 6.0], &pc))?;
    let w: Vec<f64> = band.iter().map(|r| r.upper - r.lower).collect();
    let ratio = w[0].min(w[2]) / w[1];
    ensure(w[0] > w[1] && w[2] > w[1] && ratio > TOY_RATIO, || {
        format!("widths {w:?}, ratio {ratio} not above {TOY_RATIO}")
    })?;
    Ok(format!(
        "MSE {mse:.1}, widths {:.2}/{:.2}/{:.2}, ratio {ratio:.2}",
        w[0], w[1], w[2]
    ))
}

fn random_net(
    task: Task,
    topology: &[LayerSpec],
    seed: u64,
    scale: f64,
) -> Result<Network, String> {
    let mut net = e2s(Network::init(task, topology, seed))?;
    let mut s = Stream::new(seed, &[0xacce]);
    let p: Vec<f64> = (0..net.trainable_len())
        .map(|_| scale * s.normal())
        .collect();
    e2s(net.set_trainable_params(&p))?;
    Ok(net)
}

fn random_inputs(s: &mut Stream, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| s.normals(dim)).collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.iter().map(|v| v / sum).collect()
}

const FAMILIES: [PosteriorFamily; 3] = [
    PosteriorFamily::LowRankIsotropic,
    PosteriorFamily::FullRankIsotropic,
    PosteriorFamily::ConstantStd,
];

fn degenerate_posterior() -> Outcome {
    let mut s = Stream::new(8, &[]);
    let cls_topo = [
        LayerSpec::adapted(3, 5, 2, Activation::Tanh),
        LayerSpec::fixed(5, 5, Activation::Relu),
        LayerSpec::adapted(5, 4, 2, Activation::Identity),
    ];
    let reg_topo = [
        LayerSpec::adapted(2, 6, 2, Activation::Tanh),
        LayerSpec::adapted(6, 1, 1, Activation::Identity),
    ];
    let cls_net = random_net(Task::Classification, &cls_topo, 1, 0.8)?;
    let reg_net = random_net(Task::Regression, &reg_topo, 2, 0.8)?;
    let cls_x = random_inputs(&mut s, 40, 3);
    let labels: Vec<usize> = (0..40).map(|_| s.below(4)).collect();
    let reg_x = random_inputs(&mut s, 40, 2);
    let values = s.normals(40);
    let cls_data = e2s(Dataset::classification(cls_x.clone(), Some(labels), 4))?;
    let reg_data = e2s(Dataset::regression(reg_x.clone(), Some(values)))?;
    let cases = [
        (
            &cls_net,
            &cls_data,
            vec![
                MetricKind::Nll,
                MetricKind::Acc,
                MetricKind::Ece,
                MetricKind::EmbeddingNorm,
            ],
        ),
        (
            &reg_net,
            &reg_data,
            vec![MetricKind::Mse, MetricKind::EmbeddingNorm],
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for (net, data, metrics) in &cases {
        let set = e2s(AdapterSet::bayesianize(&net.adapters(), 0.0))?;
        for family in FAMILIES {
            for convention in [
                McConvention::PredictiveThenMetric,
                McConvention::MetricThenAverage,
            ] {
                let cfg = EvalConfig {
                    mc_samples: 10,
                    seed: 3,
                    convention,
                };
                for &m in metrics {
                    let det = e2s(evaluate(net, AdapterState::Deterministic, data, m, &cfg))?.value;
                    let bay = e2s(evaluate(
                        net,
                        AdapterState::Bayesian { set: &set, family },
                        data,
                        m,
                        &cfg,
                    ))?
                    .value;
                    worst = worst.max((det - bay).abs());
                    checks += 1;
                }
            }
            for mode in [PredictionMode::FullModel, PredictionMode::LastLayerOnly] {
                let pc = PredictionConfig {
                    mc_samples: 10,
                    seed: 5,
                    family,
                    mode,
                    keep_samples: false,
                };
                let summary = e2s(mc_predict(net, &set, data.inputs(), &pc))?;
                for (x, (mean, std)) in data
                    .inputs()
                    .iter()
                    .zip(summary.mean.iter().zip(&summary.std))
                {
                    let out = e2s(net.predict(x))?;
                    let expected = match net.task() {
                        Task::Regression => out,
                        Task::Classification => softmax(&out),
                    };
                    for (a, b) in mean.iter().zip(&expected) {
                        worst = worst.max((a - b).abs());
                    }
                    worst = worst.max(std.iter().cloned().fold(0.0, f64::max));
                }
                checks += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max difference {worst:e}"))?;
    Ok(format!("{checks} comparisons, max difference {worst:.1e}"))
}

const ACTIVATIONS: [Activation; 3] = [Activation::Identity, Activation::Tanh, Activation::Relu];

fn random_topology(s: &mut Stream, input: usize, output: usize, smooth: bool) -> Vec<LayerSpec> {
    let depth = 2 + s.below(2);
    let mut dims = vec![input];
    for _ in 1..depth {
        dims.push(1 + s.below(5));
    }
    dims.push(output);
    (0..depth)
        .map(|l| {
            let (i, o) = (dims[l], dims[l + 1]);
            let act = if l + 1 == depth {
                Activation::Identity
            } else if smooth {
                [Activation::Identity, Activation::Tanh][s.below(2)]
            } else {
                ACTIVATIONS[s.below(3)]
            };
            if l + 1 == depth || s.below(2) == 0 {
                LayerSpec::adapted(i, o, 1 + s.below(i.min(o)), act)
            } else {
                LayerSpec::fixed(i, o, act)
            }
        })
        .collect()
}

fn fast_path() -> Outcome {
    let mut worst: f64 = 0.0;
    for config in 0..100u64 {
        let mut s = Stream::new(config, &[0xfa57]);
        let task = if s.below(2) == 0 {
            Task::Regression
        } else {
            Task::Classification
        };
        let input = 1 + s.below(4);
        let output = match task {
            Task::Regression => 1 + s.below(2),
            Task::Classification => 2 + s.below(3),
        };
        let topo = random_topology(&mut s, input, output, false);
        let net = random_net(task, &topo, config, 0.7)?;
        let set = e2s(AdapterSet::bayesianize(
            &net.adapters(),
            s.uniform_in(0.05, 2.0),
        ))?;
        let count = 1 + s.below(6);
        let inputs = random_inputs(&mut s, count, input);
        let cfg = PredictionConfig {
            mc_samples: 1 + s.below(8),
            seed: config * 31 + 7,
            family: FAMILIES[s.below(3)],
            mode: PredictionMode::LastLayerOnly,
            keep_samples: true,
        };
        let naive = e2s(mc_predict(&net, &set, &inputs, &cfg))?;
        let fast = e2s(last_layer_fast_predict(&net, &set, &inputs, &cfg))?;
        ensure(fast.prefix_evaluations == inputs.len(), || {
            format!(
                "config {config}: {} prefix passes for {} inputs",
                fast.prefix_evaluations,
                inputs.len()
            )
        })?;
        ensure(
            naive.prefix_evaluations == inputs.len() * cfg.mc_samples,
            || {
                format!(
                    "config {config}: naive path ran the prefix {} times",
                    naive.prefix_evaluations
                )
            },
        )?;
        let flat = |v: &[Vec<f64>]| v.concat();
        let pairs = [
            (flat(&naive.mean), flat(&fast.mean)),
            (flat(&naive.std), flat(&fast.std)),
            (
                naive
                    .samples
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|x| x.concat())
                    .collect::<Vec<_>>()
                    .concat(),
                fast.samples
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|x| x.concat())
                    .collect::<Vec<_>>()
                    .concat(),
            ),
        ];
        for (a, b) in &pairs {
            ensure(a.len() == b.len(), || {
                format!("config {config}: output sizes differ")
            })?;
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max difference {worst:e}"))?;
    Ok(format!("100 configurations, max difference {worst:.1e}"))
}

/// Bin of a confidence by scanning the intervals `(k/15, (k+1)/15]`, with 0
/// going to the first bin.
fn oracle_bin(c: f64) -> usize {
    (0..15).find(|&k| c <= (k + 1) as f64 / 15.0).unwrap_or(14)
}

fn metric_oracles() -> Outcome {
    let mut worst_ece: f64 = 0.0;
    let mut worst_nll: f64 = 0.0;
    for set in 0..1000u64 {
        let mut s = Stream::new(set, &[0xece]);
        let classes = 2 + s.below(9);
        let count = 1 + s.below(60);
        let sharp = s.uniform_in(0.1, 6.0);
        let mut conf = Vec::with_capacity(count);
        let mut correct = Vec::with_capacity(count);
        let mut true_probs = Vec::with_capacity(count);
        for _ in 0..count {
            let probs = softmax(
                &s.normals(classes)
                    .iter()
                    .map(|z| sharp * z)
                    .collect::<Vec<_>>(),
            );
            let label = s.below(classes);
            let (arg, &max) =
                probs
                    .iter()
                    .enumerate()
                    .fold((0, &f64::NEG_INFINITY), |best, (k, p)| {
                        if p > best.1 {
                            (k, p)
                        } else {
                            best
                        }
                    });
            conf.push(max);
            correct.push(arg == label);
            true_probs.push(probs[label]);
        }
        let report = e2s(ece(&conf, &correct, 15))?;
        let bins = report.bin_detail.as_ref().unwrap();
        let mut counts = [0usize; 15];
        let mut hits = [0usize; 15];
        let mut sums = [0.0f64; 15];
        for ((&c, &ok), _) in conf.iter().zip(&correct).zip(0..) {
            let b = oracle_bin(c);
            counts[b] += 1;
            hits[b] += usize::from(ok);
            sums[b] += c;
        }
        for b in 0..15 {
            ensure(bins[b].count == counts[b], || {
                format!("set {set} bin {b}: {} vs {}", bins[b].count, counts[b])
            })?;
        }
        let oracle: f64 = (0..15)
            .filter(|&b| counts[b] > 0)
            .map(|b| {
                let n = counts[b] as f64;
                (n / count as f64) * (hits[b] as f64 / n - sums[b] / n).abs()
            })
            .sum();
        worst_ece = worst_ece.max((report.value - oracle).abs());
        let oracle_nll = -true_probs.iter().map(|p| p.max(1e-12).ln()).sum::<f64>() / count as f64;
        worst_nll = worst_nll.max((e2s(nll(&true_probs))? - oracle_nll).abs());
    }
    ensure(worst_ece <= 1e-12, || {
        format!("ECE differs by {worst_ece:e}")
    })?;
    ensure(worst_nll <= 1e-12, || {
        format!("NLL differs by {worst_nll:e}")
    })?;
    let perfect_ece = e2s(ece(&[1.0; 20], &[true; 20], 15))?.value;
    let perfect_nll = e2s(nll(&[1.0; 20]))?;
    ensure(perfect_ece == 0.0 && perfect_nll == 0.0, || {
        format!("confident and correct: ECE {perfect_ece}, NLL {perfect_nll}")
    })?;
    Ok(format!(
        "1000 sets, ECE error {worst_ece:.1e}, NLL error {worst_nll:.1e}"
    ))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let mut s = Stream::new(case, &[0x67ad]);
        let task = if s.below(2) == 0 {
            Task::Regression
        } else {
            Task::Classification
        };
        let input = 1 + s.below(4);
        let output = match task {
            Task::Regression => 1,
            Task::Classification => 2 + s.below(3),
        };
        let topo = random_topology(&mut s, input, output, true);
        let net = random_net(task, &topo, case, 0.6)?;
        let count = 1 + s.below(5);
        let x = random_inputs(&mut s, count, input);
        let data = match task {
            Task::Regression => e2s(Dataset::regression(x, Some(s.normals(count))))?,
            Task::Classification => {
                let labels = (0..count).map(|_| s.below(output)).collect();
                e2s(Dataset::classification(x, Some(labels), output))?
            }
        };
        let decay = [0.0, 0.01][s.below(2)];
        let kind = LossKind::for_task(task);
        let (_, grads) = e2s(loss_and_grads(&net, &data, kind, decay))?;
        let analytic = grads.flatten();
        let theta = net.trainable_params();
        let h = 1e-5;
        let mut probe = net.clone();
        let mut loss_at = |k: usize, offset: f64| -> Result<f64, String> {
            let mut shifted = theta.clone();
            shifted[k] += offset;
            e2s(probe.set_trainable_params(&shifted))?;
            Ok(e2s(loss_and_grads(&probe, &data, kind, decay))?.0)
        };
        for (k, &exact) in analytic.iter().enumerate() {
            let numeric = (loss_at(k, h)? - loss_at(k, -h)?) / (2.0 * h);
            let err = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1e-4, || format!("relative error {worst:e}"))?;
    Ok(format!("200 networks, relative error {worst:.1e}"))
}

fn mc_scaling() -> Outcome {
    let topo = [
        LayerSpec::adapted(2, 6, 2, Activation::Tanh),
        LayerSpec::adapted(6, 3, 2, Activation::Identity),
    ];
    let net = random_net(Task::Classification, &topo, 12, 0.8)?;
    let set = e2s(AdapterSet::bayesianize(&net.adapters(), 0.4))?;
    let x = vec![vec![0.3, -0.7]];
    let reps = 400usize;
    let mut se = Vec::new();
    for n in [10usize, 40, 160] {
        let estimates = (0..reps)
            .map(|r| {
                let cfg = PredictionConfig {
                    mc_samples: n,
                    seed: (n * 1_000_000 + r) as u64,
                    family: PosteriorFamily::LowRankIsotropic,
                    ..PredictionConfig::default()
                };
                mc_predict(&net, &set, &x, &cfg).map(|p| p.probabilities.unwrap()[0][0])
            })
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let var = estimates.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        se.push(var.sqrt());
    }
    ensure(se[0] > 0.0, || "no Monte-Carlo spread at all".into())?;
    // Two independent standard deviations over `reps` replicates: the ratio's
    // relative standard error is about 1/√(reps − 1).
    let rel = 1.0 / ((reps - 1) as f64).sqrt();
    let mut detail = Vec::new();
    for k in 0..2 {
        let ratio = se[k] / se[k + 1];
        let band = 3.0 * 2.0 * rel;
        ensure((ratio - 2.0).abs() <= band, || {
            format!("standard errors {se:?}: ratio {ratio} not within {band} of 2")
        })?;
        detail.push(format!("{ratio:.3}"));
    }
    Ok(format!(
        "standard errors {:.2e}/{:.2e}/{:.2e}, ratios {}",
        se[0],
        se[1],
        se[2],
        detail.join(", ")
    ))
}

fn parameterization() -> Outcome {
    let mut worst_final: f64 = 0.0;
    let mut min_cstd = f64::INFINITY;
    for seed in 0..100u64 {
        let (fin, cstd) = e2s(reparameterization_gap(seed, 1.0))?;
        worst_final = worst_final.max(fin);
        min_cstd = min_cstd.min(cstd);
    }
    ensure(worst_final <= 1e-8, || {
        format!("low-rank family changed by {worst_final:e}")
    })?;
    ensure(min_cstd > 1e-3, || {
        format!("constant-std family changed by only {min_cstd:e}")
    })?;
    Ok(format!(
        "100 adapters, low-rank gap {worst_final:.1e}, smallest constant-std gap {min_cstd:.2e}"
    ))
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 13] = [
        (
            "covariance identity in the singular-vector basis",
            5,
            covariance_identity,
        ),
        ("regrouping equivalence", 5, regrouping),
        ("closed-form and general KL agree", 10, kl_agreement),
        (
            "Lagrangian and constrained optima agree",
            30,
            vi_equivalence,
        ),
        ("binary search on monotone metrics", 1, binary_search),
        (
            "grid interpolation on linear metrics",
            1,
            grid_interpolation,
        ),
        (
            "toy regression band widens away from the data",
            60,
            toy_regression,
        ),
        (
            "zero-scale posterior equals the deterministic model",
            5,
            degenerate_posterior,
        ),
        ("last-layer fast path equals the naive path", 10, fast_path),
        ("ECE and NLL match brute-force oracles", 5, metric_oracles),
        ("finite-difference gradient check", 30, gradient_check),
        ("Monte-Carlo error shrinks like 1/sqrt(N)", 60, mc_scaling),
        (
            "low-rank posterior is parameterization independent",
            10,
            parameterization,
        ),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*budget);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget} s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {status} {:>8.3}s (budget {budget:>2}s) {name}: {detail}",
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
