//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use rayon::prelude::*;

use crate::analysis::{ablate_by_axis, ablate_by_flops, variance_report, AblationAxis, AblationTarget};
use crate::curves::{curve_points, eval_curve, fit_curve, LRSchedule};
use crate::error::{Error, Result};
use crate::io::{read_records, write_records};
use crate::laws::data::{final_loss_points, select};
use crate::laws::{chain_params, eval_power_law, eval_sigmoid, fit_step2, step2_points};
use crate::pipeline::{fit_task, FittedModel, Prediction, TaskFit, Variant};
use crate::plot::{emit_plot, PlotKind, PlotPoint, Series};
use crate::presets::{self, PublishedFit};
use crate::report::{
    ablation_csv, curve_csv, prediction_csv, sig4, variance_csv, CurveRow, PredictionCell, PredictionRow, Target,
};
use crate::synth::{generate, GeneratorSpec};
use crate::types::{CheckpointRecord, FeatureKind, FitConfig, CHINCHILLA_TOKENS_PER_PARAM};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LADDER_LAWS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ladder-laws", version, about = "Fit task scaling laws on ladder runs and extrapolate them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Checkpoint records (JSON Lines); repeatable.
    #[arg(long = "records", value_name = "PATH")]
    pub records: Vec<PathBuf>,
    /// Comma-separated task names; defaults to every task present.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
    #[arg(long, default_value = "two_step_bpb")]
    pub variant: Variant,
    /// Fit configuration overrides (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "ladder-out")]
    pub out: PathBuf,
    /// Reject invalid records and fail on degenerate fits.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Flops,
    ModelSize,
    ChinchillaMult,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit each task and write fit JSON, formulas and plots.
    Fit {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Predict target models; writes a prediction table.
    #[command(alias = "chain")]
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        /// name:N:D[:actual_loss[:actual_acc]]; repeatable.
        #[arg(long = "target")]
        targets: Vec<Target>,
        /// Add the bundled target models with their observed accuracies.
        #[arg(long)]
        preset_targets: bool,
        /// Read fits written by `fit` from this directory.
        #[arg(long, value_name = "DIR")]
        fits: Option<PathBuf>,
        /// Use the bundled published fits instead of fitting.
        #[arg(long, conflicts_with = "fits")]
        published: bool,
    },
    /// Spread of loss and accuracy over each task's final checkpoints.
    Variance {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 10)]
        last_n: usize,
    },
    /// Prediction error as ladder models are added.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        /// name:N:D:actual_loss:actual_acc
        #[arg(long)]
        target: Target,
        #[arg(long, value_enum, default_value = "flops")]
        axis: AxisArg,
    },
    /// Fit and predict whole loss curves under learning-rate schedules.
    Curve {
        #[command(flatten)]
        inputs: Inputs,
        /// JSON object mapping model id to schedule.
        #[arg(long, value_name = "PATH")]
        schedules: Option<PathBuf>,
        #[arg(long)]
        warmup_exclusion: Option<u64>,
        /// Models left out of the fit but still predicted; repeatable.
        #[arg(long)]
        holdout: Vec<String>,
    },
    /// Generate synthetic records.
    Synth {
        /// Generator spec (JSON).
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `records.jsonl`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => 0,
        Err(Error::DegenerateFit(msg)) => {
            eprintln!("error: degenerate fit: {msg}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only if the pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { inputs } => cmd_fit(&inputs),
        Command::Predict {
            inputs,
            targets,
            preset_targets,
            fits,
            published,
        } => cmd_predict(&inputs, targets, preset_targets, fits.as_deref(), published),
        Command::Variance { inputs, last_n } => cmd_variance(&inputs, last_n),
        Command::Ablate { inputs, target, axis } => cmd_ablate(&inputs, &target, axis),
        Command::Curve {
            inputs,
            schedules,
            warmup_exclusion,
            holdout,
        } => cmd_curve(&inputs, schedules.as_deref(), warmup_exclusion, &holdout),
        Command::Synth { spec, seed, out } => cmd_synth(&spec, seed, out.as_deref()),
    }
}

fn load_config(inputs: &Inputs) -> Result<FitConfig> {
    let cfg = match &inputs.config {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::invalid(format!("{}: {e}", p.display())))
}

fn load_records(inputs: &Inputs) -> Result<Vec<CheckpointRecord>> {
    if inputs.records.is_empty() {
        return Err(Error::invalid("at least one --records path is required"));
    }
    let mut out = Vec::new();
    for p in &inputs.records {
        out.extend(read_records(p, inputs.strict)?);
    }
    Ok(out)
}

/// Requested tasks, or every task carrying `kind`, sorted.
fn task_list(inputs: &Inputs, records: &[CheckpointRecord], kind: FeatureKind) -> Result<Vec<String>> {
    if !inputs.tasks.is_empty() {
        return Ok(inputs.tasks.clone());
    }
    let tasks: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.feature_kind == kind)
        .map(|r| r.task.as_str())
        .collect();
    if tasks.is_empty() {
        return Err(Error::invalid(format!("no records with feature {}", kind.as_str())));
    }
    Ok(tasks.into_iter().map(String::from).collect())
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

fn fit_file(task: &str, variant: Variant) -> String {
    format!("{task}.{variant}.fit.json")
}

fn multiplier_of(n_params: u64, tokens: u64) -> f64 {
    (tokens as f64 / (CHINCHILLA_TOKENS_PER_PARAM * n_params as f64) * 10.0).round() / 10.0
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn cmd_fit(inputs: &Inputs) -> Result<()> {
    let cfg = load_config(inputs)?;
    let records = load_records(inputs)?;
    let tasks = task_list(inputs, &records, inputs.variant.feature())?;
    let fits: Vec<Result<TaskFit>> = tasks
        .par_iter()
        .map(|t| fit_task(&records, t, inputs.variant, &cfg))
        .collect();
    let mut degenerate = Vec::new();
    for (task, fit) in tasks.iter().zip(fits) {
        let fit = fit?;
        for w in fit.warnings() {
            warn!("{task}: {w}");
        }
        if fit.degenerate {
            degenerate.push(task.clone());
        }
        write(&inputs.out, &fit_file(task, inputs.variant), &serde_json::to_string_pretty(&fit)?)?;
        for f in &fit.formulas {
            println!("{task}\t{f}");
        }
        for (suffix, svg) in fit_plots(&records, &fit, &cfg)? {
            write(&inputs.out, &format!("{task}.{}.{suffix}.svg", inputs.variant), &svg)?;
        }
    }
    degeneracy_outcome(inputs.strict, &degenerate)
}

fn degeneracy_outcome(strict: bool, degenerate: &[String]) -> Result<()> {
    if strict && !degenerate.is_empty() {
        return Err(Error::DegenerateFit(format!("tasks {}", degenerate.join(", "))));
    }
    Ok(())
}

/// Step-1 loss-vs-tokens and step-2 accuracy-vs-loss charts.
fn fit_plots(records: &[CheckpointRecord], fit: &TaskFit, cfg: &FitConfig) -> Result<Vec<(&'static str, String)>> {
    let (step1, step2) = match &fit.model {
        FittedModel::TwoStep { step1, step2 } => (step1, Some(step2)),
        FittedModel::TaskCe { step1, .. } => (step1, None),
        _ => return Ok(Vec::new()),
    };
    let sel = select(records, &fit.task, fit.variant.feature())?;
    let points = final_loss_points(&sel, cfg.last_k_average)?;
    let mut by_n: BTreeMap<u64, Vec<PlotPoint>> = BTreeMap::new();
    for p in &points {
        by_n.entry(p.n_params).or_default().push(PlotPoint {
            x: p.tokens as f64,
            y: p.loss,
            multiplier: Some(multiplier_of(p.n_params, p.tokens)),
        });
    }
    let d_min = points.iter().map(|p| p.tokens).min().unwrap_or(1) as f64;
    let d_max = points.iter().map(|p| p.tokens).max().unwrap_or(1) as f64;
    let series: Vec<Series> = by_n
        .into_iter()
        .map(|(n, pts)| Series {
            name: format!("N = {}", sig4(n as f64)),
            points: pts,
            fit: log_grid(d_min / 2.0, d_max * 2.0, 48)
                .into_iter()
                .map(|d| (d, eval_power_law(&step1.params, n as f64, d)))
                .collect(),
        })
        .collect();
    let mut out = vec![("step1", emit_plot(&format!("{}: task loss", fit.task), PlotKind::LossVsTokens, &series)?)];
    if let Some(s2) = step2 {
        let pairs = step2_points(&sel, cfg)?;
        let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let series = vec![Series {
            name: "checkpoints".into(),
            points: pairs
                .iter()
                .map(|&(x, y)| PlotPoint {
                    x,
                    y,
                    multiplier: None,
                })
                .collect(),
            fit: (0..=48)
                .map(|i| {
                    let l = lo + (hi - lo) * i as f64 / 48.0;
                    (l, eval_sigmoid(&s2.params, l))
                })
                .collect(),
        }];
        out.push(("step2", emit_plot(&format!("{}: accuracy", fit.task), PlotKind::AccVsLoss, &series)?));
    }
    Ok(out)
}

enum Predictor {
    Fitted(TaskFit),
    Published(PublishedFit),
}

impl Predictor {
    fn predict(&self, n: f64, d: f64) -> Result<Prediction> {
        match self {
            Predictor::Fitted(f) => f.predict(n, d),
            Predictor::Published(p) => {
                let (loss, accuracy) = chain_params(&p.step1, &p.step2, n, d);
                Ok(Prediction {
                    loss: Some(loss),
                    accuracy,
                })
            }
        }
    }
}

fn cmd_predict(
    inputs: &Inputs,
    mut targets: Vec<Target>,
    preset_targets: bool,
    fits_dir: Option<&Path>,
    published: bool,
) -> Result<()> {
    let cfg = load_config(inputs)?;
    let mut per_task_actual: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); targets.len()];
    if preset_targets {
        for t in presets::targets() {
            targets.push(Target {
                name: t.name.clone(),
                n_params: t.n_params,
                tokens: t.tokens,
                actual_loss: None,
                actual_acc: None,
            });
            per_task_actual.push(t.actual_accuracy);
        }
    }
    if targets.is_empty() {
        return Err(Error::invalid("no targets: pass --target or --preset-targets"));
    }
    let predictors: Vec<(String, Predictor)> = if published {
        if inputs.variant != Variant::TwoStepBpb {
            return Err(Error::invalid("published fits exist only for the two_step_bpb variant"));
        }
        let all = presets::published_fits();
        let tasks: Vec<String> = if inputs.tasks.is_empty() {
            all.keys().cloned().collect()
        } else {
            inputs.tasks.clone()
        };
        tasks
            .into_iter()
            .map(|t| {
                let p = *all
                    .get(&t)
                    .ok_or_else(|| Error::invalid(format!("no published fit for task {t:?}")))?;
                Ok((t, Predictor::Published(p)))
            })
            .collect::<Result<_>>()?
    } else if let Some(dir) = fits_dir {
        if inputs.tasks.is_empty() {
            return Err(Error::invalid("--fits needs --tasks"));
        }
        inputs
            .tasks
            .iter()
            .map(|t| {
                let path = dir.join(fit_file(t, inputs.variant));
                let fit: TaskFit = serde_json::from_str(&read_text(&path)?)?;
                Ok((t.clone(), Predictor::Fitted(fit)))
            })
            .collect::<Result<_>>()?
    } else {
        let records = load_records(inputs)?;
        let tasks = task_list(inputs, &records, inputs.variant.feature())?;
        let fits: Vec<Result<TaskFit>> = tasks
            .par_iter()
            .map(|t| fit_task(&records, t, inputs.variant, &cfg))
            .collect();
        tasks
            .into_iter()
            .zip(fits)
            .map(|(t, f)| Ok((t, Predictor::Fitted(f?))))
            .collect::<Result<_>>()?
    };

    let mut degenerate = Vec::new();
    let mut rows = Vec::new();
    for (task, pred) in &predictors {
        if let Predictor::Fitted(f) = pred {
            if f.degenerate {
                degenerate.push(task.clone());
            }
        }
        let cells = targets
            .iter()
            .zip(&per_task_actual)
            .map(|(t, actuals)| {
                let actual_acc = t.actual_acc.or_else(|| actuals.get(task).copied());
                match pred.predict(t.n_params as f64, t.tokens as f64) {
                    Ok(p) => Ok(PredictionCell {
                        pred_loss: p.loss,
                        pred_acc: Some(p.accuracy),
                        actual_acc,
                        note: None,
                    }),
                    Err(Error::DegenerateFit(msg)) => {
                        warn!("{task}: {msg}");
                        Ok(PredictionCell {
                            pred_loss: None,
                            pred_acc: None,
                            actual_acc,
                            note: Some(msg),
                        })
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(PredictionRow {
            task: task.clone(),
            cells,
        });
    }
    let names: Vec<String> = targets.iter().map(|t| t.name.clone()).collect();
    let csv = prediction_csv(&names, &rows)?;
    print!("{csv}");
    write(&inputs.out, &format!("predictions.{}.csv", inputs.variant), &csv)?;
    write(
        &inputs.out,
        &format!("predictions.{}.json", inputs.variant),
        &serde_json::to_string_pretty(&rows)?,
    )?;
    degeneracy_outcome(inputs.strict, &degenerate)
}

fn cmd_variance(inputs: &Inputs, last_n: usize) -> Result<()> {
    let records = load_records(inputs)?;
    let kind = inputs.variant.feature();
    let tasks = task_list(inputs, &records, kind)?;
    let reports = tasks
        .iter()
        .map(|t| variance_report(&select(&records, t, kind)?, last_n))
        .collect::<Result<Vec<_>>>()?;
    let csv = variance_csv(&reports, last_n)?;
    print!("{csv}");
    write(&inputs.out, "variance.csv", &csv)
}

fn cmd_ablate(inputs: &Inputs, target: &Target, axis: AxisArg) -> Result<()> {
    let cfg = load_config(inputs)?;
    let records = load_records(inputs)?;
    if inputs.variant != Variant::TwoStepBpb {
        return Err(Error::invalid("ablations run the two_step_bpb pipeline"));
    }
    let (Some(actual_loss), Some(actual_acc)) = (target.actual_loss, target.actual_acc) else {
        return Err(Error::invalid("ablation target needs actual loss and accuracy"));
    };
    let at = AblationTarget {
        n_params: target.n_params,
        tokens: target.tokens,
        actual_loss,
        actual_acc,
    };
    let axis_name = match axis {
        AxisArg::Flops => "flops",
        AxisArg::ModelSize => "model_size",
        AxisArg::ChinchillaMult => "chinchilla_mult",
    };
    for task in task_list(inputs, &records, FeatureKind::BpbCorrect)? {
        let sel = select(&records, &task, FeatureKind::BpbCorrect)?;
        let sweep = match axis {
            AxisArg::Flops => ablate_by_flops(&sel, &at, &cfg)?,
            AxisArg::ModelSize => ablate_by_axis(&sel, AblationAxis::ModelSize, &at, &cfg)?,
            AxisArg::ChinchillaMult => ablate_by_axis(&sel, AblationAxis::ChinchillaMult, &at, &cfg)?,
        };
        for note in &sweep.skipped {
            warn!("{task}: skipped {note}");
        }
        let csv = ablation_csv(&sweep)?;
        print!("{csv}");
        let stem = format!("ablation.{task}.{axis_name}");
        write(&inputs.out, &format!("{stem}.csv"), &csv)?;
        if !sweep.points.is_empty() {
            let line = |name: &str, f: fn(&crate::analysis::AblationPoint) -> f64| Series {
                name: name.into(),
                points: sweep
                    .points
                    .iter()
                    .map(|p| PlotPoint {
                        x: p.cumulative_flops,
                        y: f(p),
                        multiplier: None,
                    })
                    .collect(),
                fit: sweep.points.iter().map(|p| (p.cumulative_flops, f(p))).collect(),
            };
            let series = vec![
                line("step 1", |p| p.step1_rel_err),
                line("step 2", |p| p.step2_rel_err),
                line("chained", |p| p.chained_rel_err),
            ];
            let svg = emit_plot(&format!("{task}: error vs ladder compute"), PlotKind::ErrorVsFlops, &series)?;
            write(&inputs.out, &format!("{stem}.svg"), &svg)?;
        }
    }
    Ok(())
}

fn cmd_curve(
    inputs: &Inputs,
    schedules_path: Option<&Path>,
    warmup_exclusion: Option<u64>,
    holdout: &[String],
) -> Result<()> {
    let cfg = load_config(inputs)?;
    let records = load_records(inputs)?;
    let schedules: BTreeMap<String, LRSchedule> = match schedules_path {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => BTreeMap::new(),
    };
    let mut degenerate = Vec::new();
    for task in task_list(inputs, &records, FeatureKind::BpbCorrect)? {
        let sel = select(&records, &task, FeatureKind::BpbCorrect)?;
        let train: Vec<&CheckpointRecord> = sel.iter().copied().filter(|r| !holdout.contains(&r.model_id)).collect();
        if train.is_empty() {
            return Err(Error::invalid(format!("{task}: every model is held out")));
        }
        let fit = fit_curve(&train, &schedules, warmup_exclusion, &cfg)?;
        for w in &fit.warnings {
            warn!("{task}: {w}");
        }
        let s2 = match fit_step2(&train, &cfg) {
            Ok(f) if !f.degenerate => Some(f),
            Ok(_) => {
                warn!("{task}: step-2 fit is degenerate; accuracy curves omitted");
                degenerate.push(task.clone());
                None
            }
            Err(e) => {
                warn!("{task}: no accuracy curve ({e})");
                None
            }
        };
        let acc: BTreeMap<(&str, u64), Option<f64>> =
            sel.iter().map(|r| ((r.model_id.as_str(), r.step), r.accuracy)).collect();
        let mut rows = Vec::new();
        for (step, p) in curve_points(&sel, &schedules)? {
            let pred_loss = eval_curve(&fit.params, p.n_params as f64, p.tokens as f64, p.decayed);
            rows.push(CurveRow {
                actual_acc: acc.get(&(p.model_id.as_str(), step)).copied().flatten(),
                model: p.model_id,
                step,
                tokens: p.tokens,
                decayed_fraction: p.decayed,
                pred_loss,
                actual_loss: Some(p.loss),
                pred_acc: s2.as_ref().map(|f| eval_sigmoid(&f.params, pred_loss)),
            });
        }
        let csv = curve_csv(&rows)?;
        print!("{csv}");
        write(&inputs.out, &format!("curve.{task}.csv"), &csv)?;
        write(&inputs.out, &format!("curve.{task}.fit.json"), &serde_json::to_string_pretty(&fit)?)?;
        let mut by_model: BTreeMap<&str, Series> = BTreeMap::new();
        for r in &rows {
            let s = by_model.entry(r.model.as_str()).or_insert_with(|| Series {
                name: r.model.clone(),
                ..Series::default()
            });
            s.points.push(PlotPoint {
                x: r.step as f64,
                y: r.actual_loss.unwrap_or(f64::NAN),
                multiplier: None,
            });
            s.fit.push((r.step as f64, r.pred_loss));
        }
        let series: Vec<Series> = by_model.into_values().collect();
        let svg = emit_plot(&format!("{task}: loss curves"), PlotKind::CurveOverlay, &series)?;
        write(&inputs.out, &format!("curve.{task}.svg"), &svg)?;
    }
    degeneracy_outcome(inputs.strict, &degenerate)
}

fn cmd_synth(spec_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut spec: GeneratorSpec = serde_json::from_str(&read_text(spec_path)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let records = generate(&spec)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = std::io::BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
            write_records(&mut w, &records)?;
            Ok(w.flush()?)
        }
        None => write_records(std::io::stdout().lock(), &records),
    }
}
