//! Command-line surface for the anomaly detection toolkit.
//!
//! Subcommands cover the pipeline end to end: `decompose` splits a series
//! into trend, seasonal, and remainder components; `augment` emits training
//! variants; `train` fits a detector on a corpus; `evaluate` scores held-out
//! halves and reports strict and position-relaxed metrics, optionally
//! against a rolling z-score baseline; `stream` scores values line by line
//! from stdin.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on data errors (bad
//! paths, malformed files, invalid configuration, model mismatches), 4 on
//! numeric failures (non-convergence, numeric breakdown).

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtad_core::augment::variants;
use rtad_core::decompose::{decompose_values, robust_trend_filter, write_decomposition_csv};
use rtad_core::net::{load_model, save_model, Network};
use rtad_core::series::{load_csv, save_csv};
use rtad_core::stream::{StreamConfig, StreamState};
use rtad_core::train::{
    baseline_zscore_scores, evaluate_batch, evaluate_metrics, train_pipeline, tune_threshold,
    PipelineConfig, SeriesEval, TestSpec,
};
use rtad_core::{Error, LabeledSeries, Result};

#[derive(Parser)]
#[command(
    name = "rtad",
    version,
    about = "Robust time-series anomaly detection: decomposition, training, scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a series into trend, seasonal, and remainder components.
    Decompose(DecomposeArgs),
    /// Write augmented variants of a labeled series.
    Augment(AugmentArgs),
    /// Train a detector on a corpus directory of CSV series.
    Train(TrainArgs),
    /// Score held-out test halves of a corpus and report metrics.
    Evaluate(EvaluateArgs),
    /// Score a live value stream from stdin, one number per line.
    Stream(StreamArgs),
}

/// Configuration source plus the overrides shared by all subcommands.
#[derive(Args)]
struct ConfigArgs {
    /// TOML pipeline configuration; individual flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Scoring window length (applies to both pipeline and network).
    #[arg(long, value_name = "POINTS")]
    window: Option<usize>,
    /// Seed for every random choice in the run.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Score threshold at or above which a point is flagged.
    #[arg(long, value_name = "TAU")]
    threshold: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml(&read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(window) = self.window {
            cfg.window = window;
            cfg.net.window = window;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threshold) = self.threshold {
            cfg.threshold = threshold;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input CSV: `timestamp,value[,is_anomaly]`, header optional.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Skip periodicity detection and run the trend-only path.
    #[arg(long)]
    no_period: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input CSV: `timestamp,value[,is_anomaly]`, header optional.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Directory receiving one CSV per augmentation variant.
    #[arg(long, value_name = "DIR")]
    output_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of training CSVs; read in filename order.
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Where to write the trained model.
    #[arg(long, value_name = "FILE", default_value = "model.rtad")]
    model: PathBuf,
    /// Optional JSON file for the training report.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Train without per-point value weights in the loss.
    #[arg(long)]
    no_weights: bool,
    /// Train without augmented variants in the pool.
    #[arg(long)]
    no_augmentation: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Directory of labeled CSVs; each is split in half, tails held out.
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Position tolerance for the relaxed metrics.
    #[arg(long, value_name = "POINTS")]
    m: Option<usize>,
    /// Also run and report the tuned rolling z-score baseline.
    #[arg(long)]
    baseline: bool,
    /// Optional JSON file for the metric report(s).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Optional CSV of per-point values, components, scores, and labels.
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct StreamArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Optional CSV whose values prefill the history buffer.
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    /// Pushes between decomposition re-solves.
    #[arg(long, value_name = "PUSHES", default_value_t = 5)]
    q: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(args) => cmd_decompose(&args),
        Command::Augment(args) => cmd_augment(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Stream(args) => cmd_stream(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonConvergence { .. } | Error::Numeric(_) => ExitCode::from(4),
                _ => ExitCode::from(3),
            }
        }
    }
}

/// Reads a text file, naming the path in any failure.
fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|err| Error::Validation(format!("cannot read {}: {err}", path.display())))
}

/// Loads one series CSV, naming the path in any failure.
fn open_series(path: &Path) -> Result<LabeledSeries> {
    load_csv(path).map_err(|err| Error::Validation(format!("{}: {err}", path.display())))
}

/// Loads every `.csv` under `dir` in filename order. Unreadable or malformed
/// files are skipped with a warning; an empty result is an error.
fn load_corpus(dir: &Path) -> Result<Vec<(String, LabeledSeries)>> {
    let entries = fs::read_dir(dir)
        .map_err(|err| Error::Validation(format!("cannot read {}: {err}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| path.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    let mut corpus = Vec::new();
    for path in &paths {
        match open_series(path) {
            Ok(series) => {
                let name = path
                    .file_stem()
                    .map(|stem| stem.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                corpus.push((name, series));
            }
            Err(err) => eprintln!("warning: skipping {err}"),
        }
    }
    if corpus.is_empty() {
        return Err(Error::Validation(format!(
            "no usable series in {}",
            dir.display()
        )));
    }
    Ok(corpus)
}

/// Loads a model file, naming the path in any failure.
fn open_model(path: &Path) -> Result<Network> {
    load_model(path).map_err(|err| match err {
        Error::ModelFormat(message) => {
            Error::ModelFormat(format!("{}: {message}", path.display()))
        }
        other => Error::Validation(format!("{}: {other}", path.display())),
    })
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let series = open_series(&args.input)?;
    let decomposition = if args.no_period {
        robust_trend_filter(series.values(), &cfg.decompose)?
    } else {
        decompose_values(series.values(), &cfg.decompose)?
    };
    match &args.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|err| {
                Error::Validation(format!("cannot write {}: {err}", path.display()))
            })?;
            let mut writer = BufWriter::new(file);
            write_decomposition_csv(&mut writer, series.timestamps(), series.values(), &decomposition)
        }
        None => {
            let stdout = io::stdout();
            let mut writer = BufWriter::new(stdout.lock());
            write_decomposition_csv(&mut writer, series.timestamps(), series.values(), &decomposition)
        }
    }
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let series = open_series(&args.input)?;
    fs::create_dir_all(&args.output_dir).map_err(|err| {
        Error::Validation(format!("cannot create {}: {err}", args.output_dir.display()))
    })?;
    let stem = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());

    let mut rng = rand_seeded(cfg.seed);
    let generated = variants(&series, &cfg.augment, &mut rng)?;
    for variant in &generated {
        let path = args.output_dir.join(format!("{stem}.{}.csv", variant.name));
        save_csv(&variant.series, &path)?;
        println!(
            "{}: {} points, {} anomalous -> {}",
            variant.name,
            variant.series.len(),
            variant.series.anomaly_count(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    if args.no_weights {
        cfg.use_weights = false;
    }
    if args.no_augmentation {
        cfg.use_augmentation = false;
    }
    let corpus: Vec<LabeledSeries> = load_corpus(&args.corpus)?
        .into_iter()
        .map(|(_, series)| series)
        .collect();
    let (net, report) = train_pipeline(&corpus, &cfg)?;
    save_model(&net, &args.model)?;
    if let Some(path) = &args.report {
        fs::write(path, report.to_json())
            .map_err(|err| Error::Validation(format!("cannot write {}: {err}", path.display())))?;
    }
    print!("{report}");
    println!(
        "model: {} ({} parameters)",
        args.model.display(),
        net.parameter_count()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut cfg = args.config.resolve()?;
    if let Some(m) = args.m {
        cfg.metric_tolerance = m;
    }
    let net = open_model(&args.model)?;
    if !net.architecture_matches(&cfg.net) {
        let expected = net.config();
        return Err(Error::Validation(format!(
            "model {} (window {}, depth {}, {} base channels) does not match the \
             configured architecture (window {}, depth {}, {} base channels)",
            args.model.display(),
            expected.window,
            expected.depth,
            expected.base_channels,
            cfg.net.window,
            cfg.net.depth,
            cfg.net.base_channels
        )));
    }

    let corpus = load_corpus(&args.corpus)?;
    let mut names = Vec::new();
    let mut specs = Vec::new();
    for (name, series) in corpus {
        let train_len = series.len() / 2;
        if train_len < cfg.window {
            eprintln!(
                "warning: skipping {name}: training half of {train_len} points cannot fill a window of {}",
                cfg.window
            );
            continue;
        }
        names.push(name);
        specs.push(TestSpec { series, train_len });
    }
    if specs.is_empty() {
        return Err(Error::Validation(
            "every series was too short to evaluate".to_string(),
        ));
    }

    let evals = evaluate_batch(&net, &specs, &cfg)?;
    let report = evaluate_metrics(&evals, cfg.metric_tolerance)?;
    println!("model:");
    println!("{report}");

    let baseline = if args.baseline {
        Some(run_baseline(&specs, &evals, &cfg)?)
    } else {
        None
    };
    if let Some((tau, ref baseline_report)) = baseline {
        println!();
        println!("rolling z-score baseline (threshold tuned to {tau:.4}):");
        println!("{baseline_report}");
    }

    if let Some(path) = &args.report {
        let json = match &baseline {
            Some((tau, baseline_report)) => serde_json::json!({
                "model": report,
                "baseline": baseline_report,
                "baseline_threshold": tau,
            }),
            None => serde_json::json!({ "model": report }),
        };
        let text = serde_json::to_string_pretty(&json).expect("report serialization cannot fail");
        fs::write(path, text)
            .map_err(|err| Error::Validation(format!("cannot write {}: {err}", path.display())))?;
    }
    if let Some(path) = &args.scores {
        write_scores_csv(path, &names, &specs, &evals)?;
    }
    Ok(())
}

/// Rolling z-score comparator: scores every test half, tunes one shared
/// threshold on the pooled held-out labels (its best case), and reports the
/// same strict and relaxed metrics as the model.
fn run_baseline(
    specs: &[TestSpec],
    evals: &[SeriesEval],
    cfg: &PipelineConfig,
) -> Result<(f64, rtad_core::metrics::MetricReport)> {
    let mut per_series = Vec::with_capacity(specs.len());
    for spec in specs {
        let z = baseline_zscore_scores(spec.series.values(), cfg.window)?;
        per_series.push(z[spec.train_len..].to_vec());
    }
    let pooled_scores: Vec<f64> = per_series.iter().flatten().copied().collect();
    let pooled_labels: Vec<bool> = evals.iter().flat_map(|e| e.labels.iter().copied()).collect();
    let tau = tune_threshold(&pooled_scores, &pooled_labels)?;
    let flags: Vec<Vec<bool>> = per_series
        .iter()
        .map(|scores| scores.iter().map(|&s| s >= tau).collect())
        .collect();
    let labels: Vec<Vec<bool>> = evals.iter().map(|e| e.labels.clone()).collect();
    let report = rtad_core::metrics::MetricReport::evaluate(&flags, &labels, cfg.metric_tolerance)?;
    Ok((tau, report))
}

/// Emits per-point plot data: one row per evaluated test point with its
/// value, component attributions, score, flag, and label.
fn write_scores_csv(
    path: &Path,
    names: &[String],
    specs: &[TestSpec],
    evals: &[SeriesEval],
) -> Result<()> {
    let file = fs::File::create(path)
        .map_err(|err| Error::Validation(format!("cannot write {}: {err}", path.display())))?;
    let mut writer = BufWriter::new(file);
    writeln!(
        writer,
        "series,index,timestamp,value,trend,seasonal,remainder,score,is_anomaly,label"
    )?;
    for ((name, spec), eval) in names.iter().zip(specs).zip(evals) {
        let timestamps = &spec.series.timestamps()[spec.train_len..];
        let values = &spec.series.values()[spec.train_len..];
        for i in 0..eval.scores.len() {
            writeln!(
                writer,
                "{name},{i},{},{},{},{},{},{},{},{}",
                timestamps[i],
                values[i],
                eval.trend[i],
                eval.seasonal[i],
                eval.remainder[i],
                eval.scores[i],
                eval.flags[i] as u8,
                eval.labels[i] as u8
            )?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn cmd_stream(args: &StreamArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let net = open_model(&args.model)?;
    if !net.architecture_matches(&cfg.net) {
        return Err(Error::Validation(format!(
            "model {} does not match the configured architecture",
            args.model.display()
        )));
    }
    let history = match &args.history {
        Some(path) => open_series(path)?.values().to_vec(),
        None => Vec::new(),
    };
    let stream_cfg = StreamConfig {
        buffer_len: cfg.eval_buffer,
        resolve_every: args.q,
        threshold: cfg.threshold,
        decompose: cfg.decompose.clone(),
    };
    let mut state = StreamState::new(net, stream_cfg, &history)?;

    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (line_index, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        let row = line_index + 1;
        let text = line.trim();
        let value: f64 = text.parse().map_err(|_| Error::Parse {
            row,
            message: format!("expected one number per line, got {text:?}"),
        })?;
        let verdict = state.push(value)?;
        writeln!(out, "{},{},{}", verdict.index, verdict.score, verdict.is_anomaly)?;
        out.flush()?;
    }
    Ok(())
}

/// Deterministic generator for a seed, matching the toolkit's stream cipher
/// choice without pulling the RNG crates into the binary's public surface.
fn rand_seeded(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
