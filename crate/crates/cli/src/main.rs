mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{ModelOverrides, RunConfig};
use serde_json::json;
use snmpp::data::{load_jsonl, mean_inter_event_time};
use snmpp::likelihood::per_sequence_nll;
use snmpp::model::{default_lag_grid, intensity_curve, kernel_curves, lag_grid, write_intensity_csv, write_kernel_csv};
use snmpp::predict::{bootstrap_ci, constant_baseline, evaluate, write_predictions_csv};
use snmpp::simulate::{generate_dataset, write_dataset};
use snmpp::train::train;
use snmpp::{Estimator, LrSchedule, EventSequence, Generator, Homogeneous, IntensityModel, Link, Manifest, Snmpp};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "snmpp", version, about = "Delayed-kernel multivariate point processes")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/val JSONL files and a manifest.
    Simulate(SimulateArgs),
    /// Fit a model and write the best checkpoint.
    Train(TrainArgs),
    /// Prediction metrics and recovered parameters for a checkpoint.
    Eval(EvalArgs),
    /// Write kernel or intensity curves as CSV.
    Export(ExportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum GeneratorName {
    Pp1,
    Pp2,
    SupplyChain,
    Homogeneous,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    generator: GeneratorName,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated rates for the homogeneous generator.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Horizon for the homogeneous generator.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LinkName {
    Softplus,
    EluPlusOne,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EstimatorName {
    Stratified,
    GlobalGmce,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory with train.jsonl, val.jsonl and manifest.json.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Also append epoch records to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Segments per inter-event interval.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    estimator: Option<EstimatorName>,
    #[arg(long)]
    link: Option<LinkName>,
    /// Softplus link sharpness.
    #[arg(long)]
    beta: Option<f64>,
    /// Soft-clip smoothness.
    #[arg(long)]
    smoothness: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cosine-decay the learning rate to this fraction over the epoch budget.
    #[arg(long)]
    cosine_final: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (evaluates val.jsonl) or a JSONL file.
    #[arg(long)]
    data: PathBuf,
    /// Truncation horizon in mean gaps.
    #[arg(long)]
    multiplier: Option<f64>,
    /// Per-event predictions CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Compare against a constant-rate model fitted on train.jsonl.
    #[arg(long)]
    compare_constant: bool,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(subcommand)]
    what: ExportWhat,
}

#[derive(Subcommand, Debug)]
enum ExportWhat {
    /// `ψ·φ` for every ordered pair on a lag grid.
    Kernels {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Intensities of every type along one sequence.
    Intensity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        points: usize,
    },
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn cmd_simulate(args: SimulateArgs, cfg: RunConfig) -> Result<()> {
    let sim = cfg.simulate;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let generator = match args.generator {
        GeneratorName::Pp1 => Generator::Pp1,
        GeneratorName::Pp2 => Generator::Pp2,
        GeneratorName::SupplyChain => Generator::SupplyChain(sim.supply_chain.clone().unwrap_or_default()),
        GeneratorName::Homogeneous => {
            let base = sim.homogeneous.clone().unwrap_or(Homogeneous {
                rates: vec![0.5],
                horizon: 50.0,
            });
            Generator::Homogeneous(Homogeneous {
                rates: args.rates.unwrap_or(base.rates),
                horizon: args.horizon.unwrap_or(base.horizon),
            })
        }
    };
    let (default_train, default_val) = match generator {
        Generator::SupplyChain(_) => (1500, 250),
        _ => (6000, 200),
    };
    let n_train = args.n_train.or(sim.n_train).unwrap_or(default_train);
    let n_val = args.n_val.or(sim.n_val).unwrap_or(default_val);
    let dataset = generate_dataset(&generator, n_train, n_val, seed)?;
    write_dataset(&args.out, &generator, &dataset, seed)?;
    let events: usize = dataset.train.iter().map(|s| s.len()).sum();
    eprintln!(
        "{}: {} train / {} val sequences ({} train events) -> {}",
        generator.name(),
        n_train,
        n_val,
        events,
        args.out.display()
    );
    emit(json!({
        "command": "simulate",
        "generator": generator.name(),
        "n-train": n_train,
        "n-val": n_val,
        "seed": seed,
        "out": args.out,
    }));
    Ok(())
}

struct Data {
    manifest: Option<Manifest>,
    train: Vec<EventSequence>,
    val: Vec<EventSequence>,
}

fn load_dataset(dir: &Path) -> Result<Data> {
    let manifest_path = dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        Some(Manifest::load(&manifest_path)?)
    } else {
        None
    };
    let k = manifest.as_ref().map(|m| m.num_types);
    let train = load_jsonl(dir.join("train.jsonl"), k).with_context(|| format!("loading {}/train.jsonl", dir.display()))?;
    let val = load_jsonl(dir.join("val.jsonl"), k).with_context(|| format!("loading {}/val.jsonl", dir.display()))?;
    Ok(Data { manifest, train, val })
}

fn num_types(data: &Data) -> Result<usize> {
    if let Some(m) = &data.manifest {
        return Ok(m.num_types);
    }
    data.train
        .iter()
        .chain(&data.val)
        .filter_map(|s| s.max_mark())
        .max()
        .map(|k| k + 1)
        .ok_or_else(|| anyhow!("cannot infer the number of event types from an empty dataset"))
}

fn is_supply_chain(data: &Data) -> bool {
    data.manifest.as_ref().is_some_and(|m| m.generator == "supply-chain")
}

fn cmd_train(args: TrainArgs, cfg: RunConfig) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let k = num_types(&data)?;
    let supply = is_supply_chain(&data);

    let mut overrides: ModelOverrides = cfg.model.clone();
    if let Some(l) = args.link {
        overrides.link = Some(match l {
            LinkName::Softplus => Link::Softplus {
                beta: args.beta.unwrap_or(10.0),
            },
            LinkName::EluPlusOne => Link::EluPlusOne,
        });
    } else if let (Some(beta), Some(Link::Softplus { .. }) | None) = (args.beta, overrides.link) {
        overrides.link = Some(Link::Softplus { beta });
    }
    if args.smoothness.is_some() {
        overrides.smoothness = args.smoothness;
    }
    let default_link = if supply { Link::EluPlusOne } else { Link::synthetic() };
    let spec = overrides.resolve(k, default_link);
    spec.validate()?;

    let mut tc = cfg.train_config()?;
    if supply && !cfg.sets_batch_size() {
        tc.optimizer.batch_size = 16;
    }
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if let Some(v) = args.patience {
        tc.patience = v;
    }
    if let Some(v) = args.lr {
        tc.optimizer.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        tc.optimizer.batch_size = v;
    }
    if let Some(v) = args.weight_decay {
        tc.optimizer.weight_decay = v;
    }
    if let Some(v) = args.q {
        tc.nll.segments = v;
    }
    if let Some(e) = args.estimator {
        tc.nll.estimator = match e {
            EstimatorName::Stratified => Estimator::Stratified,
            EstimatorName::GlobalGmce => Estimator::GlobalGmce,
        };
    }
    if let Some(s) = args.seed.or(cfg.seed) {
        tc.seed = s;
    }
    if let Some(f) = args.cosine_final {
        tc.schedule = LrSchedule::Cosine { final_fraction: f };
    }

    let mean_gap = mean_inter_event_time(&data.train);
    let mut model = Snmpp::new(spec.clone(), tc.seed)?;
    eprintln!(
        "training K={} on {} sequences ({} val), {} parameters, batch {}, lr {}, Q={}, {:?}",
        k,
        data.train.len(),
        data.val.len(),
        model.num_params(),
        tc.optimizer.batch_size,
        tc.optimizer.learning_rate,
        tc.nll.segments,
        tc.nll.estimator
    );
    let mut log = match &args.log {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let extra = json!({ "train": tc, "data": args.data });
    let out = train(&mut model, &data.train, &data.val, &tc, |r| {
        let line = serde_json::to_string(r).unwrap();
        println!("{line}");
        if let Some(w) = log.as_mut() {
            let _ = writeln!(w, "{line}");
        }
        eprintln!("epoch {:>3}  train {:.4}  val {:.4}  {:.1}s", r.epoch, r.train_nll, r.val_nll, r.wall_seconds);
    })?;
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    out.best.save(&args.out, mean_gap, extra)?;
    eprintln!(
        "stopped ({:?}) after {} epochs; best val NLL {:.4} at epoch {} -> {}",
        out.stop,
        out.history.len(),
        out.best_val_nll,
        out.best_epoch,
        args.out.display()
    );
    emit(json!({
        "command": "train",
        "stop": out.stop,
        "epochs": out.history.len(),
        "best-epoch": out.best_epoch,
        "best-val-nll": out.best_val_nll,
        "seed": tc.seed,
        "checkpoint": args.out,
    }));
    Ok(())
}

fn eval_sequences(path: &Path, k: usize) -> Result<(Vec<EventSequence>, Option<Vec<EventSequence>>)> {
    if path.is_dir() {
        let val = load_jsonl(path.join("val.jsonl"), Some(k))?;
        let train_path = path.join("train.jsonl");
        let train = if train_path.exists() {
            Some(load_jsonl(train_path, Some(k))?)
        } else {
            None
        };
        Ok((val, train))
    } else {
        Ok((load_jsonl(path, Some(k))?, None))
    }
}

fn cmd_eval(args: EvalArgs, cfg: RunConfig) -> Result<()> {
    let (model, meta) = Snmpp::load(&args.checkpoint)?;
    let k = model.spec().num_types;
    let (test, train_set) = eval_sequences(&args.data, k)?;
    let mut pc = cfg.predict.clone();
    if let Some(m) = args.multiplier {
        pc.multiplier = m;
    }
    let mean_gap = meta
        .mean_inter_event_time
        .or_else(|| train_set.as_deref().and_then(mean_inter_event_time))
        .or_else(|| mean_inter_event_time(&test))
        .ok_or_else(|| anyhow!("no mean inter-event time available"))?;
    let view = model.view();
    let report = evaluate(&view, &test, mean_gap, &pc)?;
    let nll_config = cfg.train_config()?.nll;
    let nll = per_sequence_nll(&view, &test, &nll_config);
    let mean_nll = nll.iter().map(|r| r.total_nll).sum::<f64>() / nll.len() as f64;
    if let Some(p) = &args.predictions {
        write_predictions_csv(BufWriter::new(File::create(p)?), &report.predictions)?;
    }
    let mut out = json!({
        "command": "eval",
        "time_rmse": report.time_rmse,
        "type_error_rate": report.type_error_rate,
        "n_events": report.n_events,
        "skipped": report.skipped,
        "nll": mean_nll,
        "config": pc,
        "mean-gap": mean_gap,
        "recovered": model.recovered(),
    });
    eprintln!(
        "RMSE {:.4}  type error {:.4}  NLL {:.4}  ({} events)",
        report.time_rmse, report.type_error_rate, mean_nll, report.n_events
    );

    if args.compare_constant {
        let reference = train_set.as_deref().unwrap_or(&test);
        let base = constant_baseline(reference, k);
        let base_report = evaluate(&base, &test, mean_gap, &pc)?;
        let base_nll = per_sequence_nll(&base, &test, &nll_config);
        let seed = args.seed.or(cfg.seed).unwrap_or(0);
        let units = paired_units(&report, &base_report, &nll, &base_nll);
        let nll_ci = bootstrap_ci(&units, |u| mean(u.iter().map(|x| x.base_nll - x.nll)), args.bootstrap, 0.95, seed);
        let rmse_ci = bootstrap_ci(&units, rmse_gap, args.bootstrap, 0.95, seed ^ 1);
        eprintln!(
            "constant baseline: RMSE {:.4}  NLL {:.4}; NLL gain {:.4} [{:.4}, {:.4}], RMSE gain {:.4} [{:.4}, {:.4}]",
            base_report.time_rmse,
            base_nll.iter().map(|r| r.total_nll).sum::<f64>() / base_nll.len() as f64,
            nll_ci.estimate,
            nll_ci.lower,
            nll_ci.upper,
            rmse_ci.estimate,
            rmse_ci.lower,
            rmse_ci.upper
        );
        out["constant-baseline"] = json!({
            "rates": base.rates,
            "time_rmse": base_report.time_rmse,
            "type_error_rate": base_report.type_error_rate,
            "nll-gain-ci": nll_ci,
            "rmse-gain-ci": rmse_ci,
        });
    }
    emit(out);
    Ok(())
}

/// Per-sequence paired quantities for bootstrap comparisons.
struct Unit {
    nll: f64,
    base_nll: f64,
    sq: f64,
    base_sq: f64,
    n: usize,
}

fn paired_units(
    model: &snmpp::EvalReport,
    base: &snmpp::EvalReport,
    nll: &[snmpp::LossReport],
    base_nll: &[snmpp::LossReport],
) -> Vec<Unit> {
    let mut units: Vec<Unit> = nll
        .iter()
        .zip(base_nll)
        .map(|(a, b)| Unit {
            nll: a.total_nll,
            base_nll: b.total_nll,
            sq: 0.0,
            base_sq: 0.0,
            n: 0,
        })
        .collect();
    for (p, q) in model.predictions.iter().zip(&base.predictions) {
        let u = &mut units[p.seq];
        u.sq += p.residual().powi(2);
        u.base_sq += q.residual().powi(2);
        u.n += 1;
    }
    units
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn rmse_gap(units: &[&Unit]) -> f64 {
    let n: usize = units.iter().map(|u| u.n).sum::<usize>().max(1);
    let a = (units.iter().map(|u| u.base_sq).sum::<f64>() / n as f64).sqrt();
    let b = (units.iter().map(|u| u.sq).sum::<f64>() / n as f64).sqrt();
    a - b
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    match args.what {
        ExportWhat::Kernels {
            checkpoint,
            out,
            dt_max,
            points,
        } => {
            let (model, meta) = Snmpp::load(&checkpoint)?;
            let grid = match (dt_max, meta.mean_inter_event_time) {
                (Some(d), _) => lag_grid(d, points),
                (None, Some(g)) if points == 200 => default_lag_grid(g),
                (None, Some(g)) => lag_grid(3.0 * g, points),
                (None, None) => bail!("checkpoint has no mean inter-event time; pass --dt-max"),
            };
            if points < 2 {
                bail!("--points must be >= 2");
            }
            let curves = kernel_curves(&model.view(), &grid);
            write_kernel_csv(BufWriter::new(File::create(&out)?), &curves)?;
            emit(json!({ "command": "export", "what": "kernels", "curves": curves.len(), "out": out }));
        }
        ExportWhat::Intensity {
            checkpoint,
            sequence,
            index,
            out,
            points,
        } => {
            let (model, _) = Snmpp::load(&checkpoint)?;
            let seqs = load_jsonl(&sequence, Some(model.spec().num_types))?;
            let seq = seqs
                .get(index)
                .ok_or_else(|| anyhow!("sequence index {index} out of range ({} sequences)", seqs.len()))?;
            let view = model.view();
            let pts = intensity_curve(&view, seq, points);
            write_intensity_csv(BufWriter::new(File::create(&out)?), &pts)?;
            emit(json!({ "command": "export", "what": "intensity", "types": view.num_types(), "points": pts.len(), "out": out }));
        }
    }
    Ok(())
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Export(a) => cmd_export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error("runtime", &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
