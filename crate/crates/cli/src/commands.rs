//! Command implementations. Each command validates its flags before doing
//! any work.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tfb_core::adapter::{AdapterSet, PosteriorFamily};
use tfb_core::data::{pseudo_label, select_anchor, toy_cubic, Dataset};
use tfb_core::inference::{prediction_band, BandRow, PredictionConfig};
use tfb_core::metrics::{evaluate, AdapterState, EvalConfig, MetricKind};
use tfb_core::netcore::{train_adam, Activation, LayerSpec, Network, Task, TrainConfig};
use tfb_core::numeric::{linspace, pairwise_mean};
use tfb_core::oracle::{run_suite, Fault};
use tfb_core::search::{
    binary_search_sigma, grid_interpolated_sigma, GridOutcome, SearchConfig, SearchTrace,
};

use crate::args::{
    BayesianizeArgs, DataArgs, DataSource, DemoArgs, EvalArgs, GenDataArgs, SearchMode, TrainArgs,
    VerifyArgs,
};
use crate::checkpoint::{BayesState, Checkpoint, Meta};
use crate::data::{read_dataset, write_dataset, DataSpec};
use crate::error::{CliError, CliResult};
use crate::table::{fmt_float, write_csv, write_json};

fn config(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(format!(
            "{name} must be non-negative and finite, got {v}"
        )))
    }
}

fn at_least_one(name: &str, v: usize) -> CliResult<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(config(format!("{name} must be at least 1")))
    }
}

fn data_spec(args: &DataArgs, seed: u64) -> CliResult<DataSpec> {
    let seed = args.data_seed.unwrap_or(seed);
    match args.source {
        DataSource::ToyCubic => Ok(DataSpec::ToyCubic { seed }),
        DataSource::ToyBlobs => {
            if args.classes < 2 {
                return Err(config("toy blobs need at least 2 classes"));
            }
            at_least_one("--per-class", args.per_class)?;
            non_negative("--separation", args.separation)?;
            Ok(DataSpec::ToyBlobs {
                classes: args.classes,
                per_class: args.per_class,
                separation: args.separation,
                seed,
            })
        }
        DataSource::File => {
            let path = args
                .data
                .as_ref()
                .ok_or_else(|| config("--task file needs --data PATH"))?;
            let task = Task::from(args.kind);
            if task == Task::Classification && args.classes < 2 {
                return Err(config(
                    "a classification file needs --classes of at least 2",
                ));
            }
            let path = path
                .to_str()
                .ok_or_else(|| config("data path is not valid UTF-8"))?;
            Ok(DataSpec::File {
                path: path.to_owned(),
                task,
                classes: if task == Task::Classification {
                    args.classes
                } else {
                    0
                },
            })
        }
    }
}

/// Two adapted layers: input to hidden with the chosen activation, hidden to
/// output with identity.
fn two_layer_topology(
    input: usize,
    hidden: usize,
    output: usize,
    rank: usize,
    activation: Activation,
) -> [LayerSpec; 2] {
    [
        LayerSpec::adapted(input, hidden, rank.min(input).min(hidden), activation),
        LayerSpec::adapted(
            hidden,
            output,
            rank.min(hidden).min(output),
            Activation::Identity,
        ),
    ]
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    at_least_one("--hidden", args.hidden)?;
    at_least_one("--rank", args.rank)?;
    positive("--lr", args.lr)?;
    non_negative("--weight-decay", args.weight_decay)?;
    let spec = data_spec(&args.data, args.seed)?;
    let data = spec.load()?;
    if data.targets().is_none() {
        return Err(tfb_core::Error::MissingLabels.into());
    }
    let input = data
        .input_dim()
        .ok_or_else(|| config("training data is empty"))?;
    let output = match data.task() {
        Task::Regression => 1,
        Task::Classification => data.class_count(),
    };
    let topology = two_layer_topology(
        input,
        args.hidden,
        output,
        args.rank,
        args.activation.into(),
    );
    let init = Network::init(data.task(), &topology, args.seed)?;
    let cfg = TrainConfig {
        steps: args.steps,
        lr: args.lr,
        seed: args.seed,
        weight_decay: args.weight_decay,
    };
    let outcome = train_adam(&init, &data, &cfg)?;
    let ckpt = Checkpoint {
        net: outcome.net,
        meta: Meta {
            task: data.task(),
            train_seed: args.seed,
            steps: args.steps,
            learning_rate: args.lr,
            weight_decay: args.weight_decay,
            data: spec,
        },
        bayes: None,
    };
    ckpt.save(&args.out)?;
    println!("final_loss {}", fmt_float(outcome.final_loss));
    Ok(())
}

fn default_metric(task: Task) -> MetricKind {
    match task {
        Task::Regression => MetricKind::Mse,
        Task::Classification => MetricKind::Nll,
    }
}

fn check_metric(metric: MetricKind, task: Task) -> CliResult<()> {
    match metric.task() {
        Some(t) if t != task => Err(config(format!(
            "metric {metric} does not apply to a {task:?} model"
        ))),
        _ => Ok(()),
    }
}

fn resolve_anchor(
    args: &BayesianizeArgs,
    ckpt: &Checkpoint,
    metric: MetricKind,
) -> CliResult<Dataset> {
    let net = &ckpt.net;
    let mut anchor = match &args.anchor {
        Some(path) => read_dataset(path, net.task(), class_count(net))?,
        None => {
            let train = ckpt.meta.data.load()?;
            select_anchor(&train, args.anchor_size.min(train.len()), args.seed)?
        }
    };
    let unlabeled = anchor.targets().is_none();
    if args.pseudo_label || (unlabeled && metric.needs_labels()) {
        if net.task() != Task::Classification {
            return Err(config(
                "pseudo-labels need a classification model; give a labelled anchor",
            ));
        }
        anchor = pseudo_label(net, &anchor.without_targets())?;
    }
    Ok(anchor)
}

fn class_count(net: &Network) -> usize {
    match net.task() {
        Task::Regression => 0,
        Task::Classification => net.output_dim(),
    }
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
enum TraceDocument<'a> {
    Binary {
        config: &'a SearchConfig,
        trace: &'a SearchTrace,
    },
    Grid {
        config: &'a SearchConfig,
        outcome: &'a GridOutcome,
    },
}

fn default_trace_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".trace.csv");
    PathBuf::from(name)
}

pub fn bayesianize(args: &BayesianizeArgs) -> CliResult<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let net = &ckpt.net;
    if !net.has_adapters() {
        return Err(config("the checkpoint has no adapted layers"));
    }
    let metric = args.metric.unwrap_or_else(|| default_metric(net.task()));
    check_metric(metric, net.task())?;
    let defaults = SearchConfig::for_metric(metric);
    let cfg = SearchConfig {
        metric,
        tolerance_mode: args.tolerance.into(),
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
        bracket_lo: args.bracket_lo,
        bracket_hi: args.bracket_hi,
        max_rounds: args.rounds,
        mc_samples: args.mc_samples,
        seed: args.seed,
        family: args.family.into(),
        convention: args.convention.into(),
    };
    cfg.validate()?;
    let family = PosteriorFamily::from(args.family);

    let sigma = if let Some(sigma) = args.sigma {
        non_negative("--sigma", sigma)?;
        AdapterSet::bayesianize(&net.adapters(), sigma)?;
        sigma
    } else {
        let anchor = resolve_anchor(args, &ckpt, metric)?;
        let set = AdapterSet::bayesianize(&net.adapters(), args.bracket_lo)?;
        let trace_csv = args
            .trace
            .clone()
            .unwrap_or_else(|| default_trace_path(&args.out));
        let trace_json = trace_csv.with_extension("json");
        match args.search {
            SearchMode::Binary => {
                let trace = binary_search_sigma(&set, net, &anchor, &cfg)?;
                let rows: Vec<Vec<String>> = trace
                    .probes
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        vec![
                            (k + 1).to_string(),
                            fmt_float(p.sigma_q),
                            fmt_float(p.metric_value),
                            p.accepted.to_string(),
                            fmt_float(p.lo),
                            fmt_float(p.width),
                        ]
                    })
                    .collect();
                let header = [
                    "round",
                    "sigma_q",
                    "metric_value",
                    "accepted",
                    "bracket_lo",
                    "bracket_width",
                ];
                write_csv(&trace_csv, &header, &rows)?;
                write_json(
                    &trace_json,
                    &TraceDocument::Binary {
                        config: &cfg,
                        trace: &trace,
                    },
                )?;
                println!("p0 {}", fmt_float(trace.p0));
                if trace.no_acceptance {
                    eprintln!(
                        "warning: no probe stayed within tolerance; using the lower bracket end"
                    );
                }
                trace.result_sigma
            }
            SearchMode::Grid => {
                let outcome = grid_interpolated_sigma(&set, net, &anchor, &args.grid, None, &cfg)?;
                let rows: Vec<Vec<String>> = outcome
                    .probes
                    .iter()
                    .map(|&(s, v)| vec![fmt_float(s), fmt_float(v)])
                    .collect();
                write_csv(&trace_csv, &["sigma_q", "metric_value"], &rows)?;
                write_json(
                    &trace_json,
                    &TraceDocument::Grid {
                        config: &cfg,
                        outcome: &outcome,
                    },
                )?;
                println!("p0 {}", fmt_float(outcome.p0));
                if outcome.clamped {
                    eprintln!("warning: the tolerance target lies outside the grid's metric range; clamped");
                }
                outcome.sigma_star
            }
        }
    };

    let out = Checkpoint {
        net: ckpt.net.clone(),
        meta: ckpt.meta.clone(),
        bayes: Some(BayesState {
            sigma_q: sigma,
            family,
        }),
    };
    out.save(&args.out)?;
    println!("sigma_q {}", fmt_float(sigma));
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let net = &ckpt.net;
    let data = match (&args.data, args.data_seed) {
        (Some(_), Some(_)) => return Err(config("--data and --data-seed are exclusive")),
        (Some(path), None) => read_dataset(path, net.task(), class_count(net))?,
        (None, seed) => with_seed(&ckpt.meta.data, seed)?.load()?,
    };
    let metrics = if args.metrics.is_empty() {
        match net.task() {
            Task::Classification => vec![MetricKind::Nll, MetricKind::Acc, MetricKind::Ece],
            Task::Regression => vec![MetricKind::Mse],
        }
    } else {
        args.metrics.clone()
    };
    for &m in &metrics {
        check_metric(m, net.task())?;
        if m.needs_labels() && data.targets().is_none() {
            return Err(tfb_core::Error::MissingLabels.into());
        }
    }
    at_least_one("--mc-samples", args.mc_samples)?;
    let cfg = EvalConfig {
        mc_samples: args.mc_samples,
        seed: args.seed,
        convention: args.convention.into(),
    };
    let set = if args.deterministic {
        None
    } else {
        ckpt.adapter_set()?
    };
    let family = args
        .family
        .map(PosteriorFamily::from)
        .or(ckpt.bayes.map(|b| b.family))
        .unwrap_or_default();
    let state = match &set {
        Some(set) => AdapterState::Bayesian { set, family },
        None => AdapterState::Deterministic,
    };
    let mut rows = Vec::with_capacity(metrics.len());
    for &m in &metrics {
        let report = evaluate(net, state, &data, m, &cfg)?;
        println!("{} {}", m, fmt_float(report.value));
        rows.push(vec![
            m.name().to_owned(),
            fmt_float(report.value),
            report.sample_count.to_string(),
            args.seed.to_string(),
        ]);
    }
    write_csv(&args.out, &["kind", "value", "mc_samples", "seed"], &rows)
}

fn with_seed(spec: &DataSpec, seed: Option<u64>) -> CliResult<DataSpec> {
    let Some(new_seed) = seed else {
        return Ok(spec.clone());
    };
    let mut spec = spec.clone();
    match &mut spec {
        DataSpec::ToyCubic { seed } | DataSpec::ToyBlobs { seed, .. } => *seed = new_seed,
        DataSpec::File { .. } => {
            return Err(config("--data-seed applies only to built-in datasets"))
        }
    }
    Ok(spec)
}

fn band_rows(sigma: f64, band: &[BandRow], mle: &[f64]) -> Vec<Vec<String>> {
    band.iter()
        .zip(mle)
        .map(|(r, &m)| {
            vec![
                fmt_float(sigma),
                fmt_float(r.x),
                fmt_float(r.mean),
                fmt_float(r.lower),
                fmt_float(r.upper),
                fmt_float(m),
            ]
        })
        .collect()
}

const BAND_HEADER: [&str; 6] = ["sigma_q", "x", "mean", "lower", "upper", "mle"];

pub fn demo_toy(args: &DemoArgs) -> CliResult<()> {
    if args.sigmas.is_empty() {
        return Err(config("--sigmas needs at least one value"));
    }
    for &s in &args.sigmas {
        non_negative("--sigmas entry", s)?;
    }
    at_least_one("--mc-samples", args.mc_samples)?;
    if args.points < 2 {
        return Err(config("--points must be at least 2"));
    }
    if !args.x_min.is_finite() || !args.x_max.is_finite() || args.x_min >= args.x_max {
        return Err(config("--x-min must be below --x-max"));
    }
    positive("--lr", args.lr)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;

    let net = match &args.checkpoint {
        Some(path) => Checkpoint::load(path)?.net,
        None => {
            let data = toy_cubic(args.seed);
            let topology = two_layer_topology(1, 16, 1, 1, Activation::Relu);
            let init = Network::init(Task::Regression, &topology, args.seed)?;
            let cfg = TrainConfig {
                steps: args.steps,
                lr: args.lr,
                seed: args.seed,
                weight_decay: 0.0,
            };
            let outcome = train_adam(&init, &data, &cfg)?;
            write_dataset(&args.out_dir.join("train.csv"), &data, true)?;
            let ckpt = Checkpoint {
                net: outcome.net,
                meta: Meta {
                    task: Task::Regression,
                    train_seed: args.seed,
                    steps: args.steps,
                    learning_rate: args.lr,
                    weight_decay: 0.0,
                    data: DataSpec::ToyCubic { seed: args.seed },
                },
                bayes: None,
            };
            ckpt.save(&args.out_dir.join("model.json"))?;
            println!("final_loss {}", fmt_float(outcome.final_loss));
            ckpt.net
        }
    };

    let xs = linspace(args.x_min, args.x_max, args.points);
    let mle = xs
        .iter()
        .map(|&x| net.predict(&[x]).map(|y| y[0]))
        .collect::<tfb_core::Result<Vec<_>>>()?;
    let base = AdapterSet::bayesianize(&net.adapters(), 0.0)?;
    let cfg = PredictionConfig {
        mc_samples: args.mc_samples,
        seed: args.seed,
        family: args.family.into(),
        ..PredictionConfig::default()
    };

    let mut bands = Vec::new();
    let mut summary = Vec::new();
    for &sigma in &args.sigmas {
        let band = prediction_band(&net, &base.with_sigma(sigma)?, &xs, &cfg)?;
        let sq: Vec<f64> = band
            .iter()
            .zip(&mle)
            .map(|(r, m)| (r.mean - m).powi(2))
            .collect();
        let mean_sq_diff = pairwise_mean(&sq);
        println!(
            "sigma_q {} mean_sq_diff {}",
            fmt_float(sigma),
            fmt_float(mean_sq_diff)
        );
        summary.push(vec![fmt_float(sigma), fmt_float(mean_sq_diff)]);
        bands.extend(band_rows(sigma, &band, &mle));
    }
    write_csv(&args.out_dir.join("bands.csv"), &BAND_HEADER, &bands)?;
    write_csv(
        &args.out_dir.join("summary.csv"),
        &["sigma_q", "mean_sq_diff"],
        &summary,
    )?;

    let control = prediction_band(&net, &base, &xs, &cfg)?;
    write_csv(
        &args.out_dir.join("control.csv"),
        &BAND_HEADER,
        &band_rows(0.0, &control, &mle),
    )?;
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    let fault = if args.inject_fault {
        Fault::PerturbOmega
    } else {
        Fault::None
    };
    let outcomes = run_suite(fault);
    for o in &outcomes {
        println!(
            "{} {} worst={:e} tolerance={:e} {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance,
            o.detail
        );
    }
    if let Some(path) = &args.json {
        write_json(path, &outcomes)?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Verification {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(())
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let data = data_spec(&args.data, args.seed)?.load()?;
    write_dataset(&args.out, &data, !args.no_labels)
}
