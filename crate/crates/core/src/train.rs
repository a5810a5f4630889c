//! End-to-end training pipeline and batch evaluation.
//!
//! Preparation runs per series: split into halves, decompose the training
//! half, extract remainder windows with per-point labels and value weights,
//! apply the label-preserving augmentations, and shuffle everything into
//! batches deterministically. Evaluation replays each test half through the
//! streaming scorer with a re-solve at every step, so offline scores and
//! online scores come from the same machinery.
//!
//! Nothing in this module reads a test-half label before evaluation; the
//! leakage test below pins that down by tainting test labels and asserting
//! bit-identical trained parameters.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{variants, AugmentPolicy, Variant};
use crate::decompose::{decompose_values, DecomposeConfig};
use crate::metrics::MetricReport;
use crate::net::{
    compute_value_weights, fit, normalize_window, Batch, InputMode, NetConfig, Network,
};
use crate::series::{split_train_test, LabeledSeries};
use crate::stream::{StreamConfig, StreamState};
use crate::{Error, Result};

/// Everything a training or evaluation run needs, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Scoring window length; must equal `net.window`.
    pub window: usize,
    /// Stride between training windows. Strides above 1 jitter each start
    /// within its cell so labeled points still reach every window offset.
    pub stride: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Scores at or above this flag an anomaly.
    pub threshold: f64,
    /// Position tolerance `m` for relaxed metrics.
    pub metric_tolerance: usize,
    /// Apply per-point value weights to the loss (ablation switch).
    pub use_weights: bool,
    /// Enlarge the training pool with augmented variants (ablation switch).
    pub use_augmentation: bool,
    /// History buffer length used during evaluation.
    pub eval_buffer: usize,
    pub decompose: DecomposeConfig,
    pub augment: AugmentPolicy,
    pub net: NetConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: crate::series::DEFAULT_WINDOW,
            stride: 1,
            batch_size: 32,
            seed: 0,
            threshold: 0.5,
            metric_tolerance: 3,
            use_weights: true,
            use_augmentation: true,
            eval_buffer: 4 * crate::series::DEFAULT_WINDOW,
            decompose: DecomposeConfig::default(),
            augment: AugmentPolicy::default(),
            net: NetConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window != self.net.window {
            return Err(Error::validation(format!(
                "pipeline window {} disagrees with the network window {}",
                self.window, self.net.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::validation("stride must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if !(self.threshold.is_finite() && (0.0..=1.0).contains(&self.threshold)) {
            return Err(Error::validation("threshold must lie in [0, 1]"));
        }
        if self.eval_buffer < self.net.window {
            return Err(Error::validation(format!(
                "evaluation buffer {} cannot hold a window of {}",
                self.eval_buffer, self.net.window
            )));
        }
        if self.net.input_channels != 1 {
            return Err(Error::validation(
                "the pipeline feeds univariate windows; input_channels must be 1",
            ));
        }
        self.decompose.validate()?;
        self.augment.validate()?;
        self.net.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text)
            .map_err(|e| Error::validation(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path.as_ref(), self.to_toml())?)
    }
}

/// A series that was set aside for evaluation: the full series plus where
/// its training half ends.
#[derive(Debug, Clone)]
pub struct TestSpec {
    pub series: LabeledSeries,
    pub train_len: usize,
}

/// One skipped input and why.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedSeries {
    pub index: usize,
    pub length: usize,
    pub reason: String,
}

/// Window count contributed by one augmentation transform.
#[derive(Debug, Clone, Serialize)]
pub struct TransformCount {
    pub transform: String,
    pub windows: usize,
}

/// Accounting for a preparation/training run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainReport {
    pub series_total: usize,
    pub series_used: usize,
    pub skipped: Vec<SkippedSeries>,
    /// Windows cut from unaugmented training halves.
    pub base_windows: usize,
    /// Windows per augmentation transform, in application order.
    pub augmented_windows: Vec<TransformCount>,
    pub total_windows: usize,
    pub batches: usize,
    pub positive_points: usize,
    pub negative_points: usize,
    /// Class weight applied to anomalous points during training.
    pub label_weight: f64,
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "series: {} used of {} supplied", self.series_used, self.series_total)?;
        for skip in &self.skipped {
            writeln!(
                f,
                "  skipped #{} (length {}): {}",
                skip.index, skip.length, skip.reason
            )?;
        }
        writeln!(f, "windows: {} base", self.base_windows)?;
        for count in &self.augmented_windows {
            writeln!(f, "  +{} from {}", count.windows, count.transform)?;
        }
        writeln!(f, "  {} total in {} batches", self.total_windows, self.batches)?;
        writeln!(
            f,
            "points: {} anomalous, {} normal; label weight {:.3}",
            self.positive_points, self.negative_points, self.label_weight
        )?;
        if !self.loss_trace.is_empty() {
            write!(f, "loss:")?;
            for loss in &self.loss_trace {
                write!(f, " {loss:.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Output of dataset preparation: batches ready to train on, the held-out
/// test specifications, and the accounting report.
pub struct PreparedDataset {
    pub batches: Vec<Batch>,
    pub tests: Vec<TestSpec>,
    pub report: TrainReport,
    /// The network configuration with the class weight resolved.
    pub net_config: NetConfig,
}

/// One window of the training pool.
struct PoolWindow {
    inputs: Vec<f64>,
    labels: Vec<bool>,
    weights: Vec<f64>,
}

/// Per-series preparation result.
struct SeriesPool {
    windows: Vec<PoolWindow>,
    /// (transform name, window count); "original" first.
    counts: Vec<(&'static str, usize)>,
}

const SERIES_SALT: u64 = 0x9e3779b97f4a7c15;
const SHUFFLE_SALT: u64 = 0x5deece66d;
const MODEL_SALT: u64 = 0xa076_1d64_78bd_642f;

/// Largest class weight derived from imbalance.
const MAX_DERIVED_LABEL_WEIGHT: f64 = 50.0;

fn series_pool(
    index: usize,
    series: &LabeledSeries,
    cfg: &PipelineConfig,
) -> Result<SeriesPool> {
    let (train, _) = split_train_test(series)?;

    // The pool source is what the network will consume: remainder values in
    // the decomposing mode, raw values otherwise.
    let source = if cfg.net.input_mode == InputMode::Remainder {
        let d = decompose_values(train.values(), &cfg.decompose)?;
        LabeledSeries::from_parts(
            train.timestamps().to_vec(),
            d.remainder,
            train.labels().to_vec(),
        )?
    } else {
        train
    };

    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((index as u64).wrapping_mul(SERIES_SALT)));
    let pool: Vec<Variant> = if cfg.use_augmentation {
        variants(&source, &cfg.augment, &mut rng)?
    } else {
        vec![Variant {
            name: "original",
            series: source,
        }]
    };

    let mut windows = Vec::new();
    let mut counts = Vec::new();
    for variant in &pool {
        let mut count = 0;
        for view in variant.series.windows(cfg.net.window, cfg.stride)? {
            // Jitter each start inside its stride cell. A fixed grid aliases
            // against regularly spaced anomalies, leaving window offsets that
            // never hold a labeled point; scoring reads only the final
            // offset, so a coverage hole there would never be trained.
            let slack =
                (variant.series.len() - cfg.net.window - view.start).min(cfg.stride - 1);
            let start = view.start + if slack > 0 { rng.random_range(0..=slack) } else { 0 };
            let end = start + cfg.net.window;
            let values = &variant.series.values()[start..end];
            let labels = variant.series.labels()[start..end].to_vec();
            let weights = if cfg.use_weights {
                compute_value_weights(values, cfg.net.weight_gamma, cfg.net.weight_scale)
            } else {
                vec![1.0; values.len()]
            };
            windows.push(PoolWindow {
                inputs: normalize_window(values),
                labels,
                weights,
            });
            count += 1;
        }
        counts.push((variant.name, count));
    }
    Ok(SeriesPool { windows, counts })
}

/// Splits every series, builds the training pool (decomposition, windowing,
/// weighting, augmentation), and shuffles it into batches. Series shorter
/// than two windows are skipped and accounted for; decomposition failures
/// likewise. Only training halves are read.
pub fn prepare_dataset(corpus: &[LabeledSeries], cfg: &PipelineConfig) -> Result<PreparedDataset> {
    cfg.validate()?;
    let mut report = TrainReport {
        series_total: corpus.len(),
        ..TrainReport::default()
    };

    let usable: Vec<(usize, &LabeledSeries)> = corpus
        .iter()
        .enumerate()
        .filter(|(index, series)| {
            if series.len() >= 2 * cfg.net.window {
                true
            } else {
                report.skipped.push(SkippedSeries {
                    index: *index,
                    length: series.len(),
                    reason: format!("shorter than two windows of {}", cfg.net.window),
                });
                false
            }
        })
        .collect();

    let pools: Vec<(usize, Result<SeriesPool>)> = usable
        .par_iter()
        .map(|(index, series)| (*index, series_pool(*index, series, cfg)))
        .collect();

    let mut tests = Vec::new();
    let mut all_windows: Vec<PoolWindow> = Vec::new();
    let mut transform_totals: Vec<(&'static str, usize)> = Vec::new();
    for ((index, pool), (_, series)) in pools.into_iter().zip(&usable) {
        let pool = match pool {
            Ok(pool) => pool,
            Err(e) => {
                report.skipped.push(SkippedSeries {
                    index,
                    length: series.len(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for (name, count) in pool.counts {
            match transform_totals.iter_mut().find(|(n, _)| *n == name) {
                Some((_, total)) => *total += count,
                None => transform_totals.push((name, count)),
            }
        }
        all_windows.extend(pool.windows);
        tests.push(TestSpec {
            series: (*series).clone(),
            train_len: series.len() / 2,
        });
    }

    report.series_used = tests.len();
    for (name, count) in transform_totals {
        if name == "original" {
            report.base_windows = count;
        } else {
            report.augmented_windows.push(TransformCount {
                transform: name.to_string(),
                windows: count,
            });
        }
    }
    report.total_windows = all_windows.len();

    if all_windows.is_empty() {
        return Err(Error::validation(
            "no usable training windows: every series was skipped or too short",
        ));
    }

    for window in &all_windows {
        for &label in &window.labels {
            if label {
                report.positive_points += 1;
            } else {
                report.negative_points += 1;
            }
        }
    }
    let label_weight = cfg.net.label_weight.unwrap_or_else(|| {
        if report.positive_points == 0 {
            1.0
        } else {
            (report.negative_points as f64 / report.positive_points as f64)
                .clamp(1.0, MAX_DERIVED_LABEL_WEIGHT)
        }
    });
    report.label_weight = label_weight;
    let net_config = NetConfig {
        label_weight: Some(label_weight),
        ..cfg.net.clone()
    };

    let mut order: Vec<usize> = (0..all_windows.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
        order.shuffle(&mut rng);
    }

    let mut batches = Vec::new();
    for chunk in order.chunks(cfg.batch_size) {
        let mut inputs = Vec::with_capacity(chunk.len() * cfg.net.window);
        let mut labels = Vec::with_capacity(chunk.len() * cfg.net.window);
        let mut weights = Vec::with_capacity(chunk.len() * cfg.net.window);
        for &i in chunk {
            inputs.extend_from_slice(&all_windows[i].inputs);
            labels.extend_from_slice(&all_windows[i].labels);
            weights.extend_from_slice(&all_windows[i].weights);
        }
        batches.push(Batch::new(inputs, labels, weights, chunk.len(), &net_config)?);
    }
    report.batches = batches.len();

    Ok(PreparedDataset {
        batches,
        tests,
        report,
        net_config,
    })
}

/// Prepares the corpus and trains a fresh network on it. Deterministic under
/// the config seed; returns the model and the filled-in report.
pub fn train_pipeline(
    corpus: &[LabeledSeries],
    cfg: &PipelineConfig,
) -> Result<(Network, TrainReport)> {
    let mut dataset = prepare_dataset(corpus, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ MODEL_SALT);
    let mut net = Network::new(dataset.net_config.clone(), &mut rng)?;
    dataset.report.loss_trace = fit(&mut net, &dataset.batches, &mut rng)?;
    Ok((net, dataset.report))
}

/// Scores, flags, and component attributions for one test half, aligned
/// index-for-index with its labels.
#[derive(Debug, Clone)]
pub struct SeriesEval {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub labels: Vec<bool>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// Replays every test half through the streaming scorer, re-solving the
/// decomposition at every step. The training half prefills the buffer, so
/// early test windows draw their context across the split boundary and every
/// test index receives exactly one score.
pub fn evaluate_batch(
    net: &Network,
    tests: &[TestSpec],
    cfg: &PipelineConfig,
) -> Result<Vec<SeriesEval>> {
    cfg.validate()?;
    let stream_cfg = StreamConfig {
        buffer_len: cfg.eval_buffer,
        resolve_every: 1,
        threshold: cfg.threshold,
        decompose: cfg.decompose.clone(),
    };
    tests
        .par_iter()
        .map(|spec| {
            let values = spec.series.values();
            let mut stream =
                StreamState::new(net.clone(), stream_cfg.clone(), &values[..spec.train_len])?;
            let test_values = &values[spec.train_len..];
            let mut scores = Vec::with_capacity(test_values.len());
            let mut flags = Vec::with_capacity(test_values.len());
            let mut trend = Vec::with_capacity(test_values.len());
            let mut seasonal = Vec::with_capacity(test_values.len());
            let mut remainder = Vec::with_capacity(test_values.len());
            for &value in test_values {
                let verdict = stream.push(value)?;
                scores.push(verdict.score);
                flags.push(verdict.is_anomaly);
                trend.push(verdict.trend);
                seasonal.push(verdict.seasonal);
                remainder.push(verdict.remainder);
            }
            Ok(SeriesEval {
                scores,
                flags,
                labels: spec.series.labels()[spec.train_len..].to_vec(),
                trend,
                seasonal,
                remainder,
            })
        })
        .collect()
}

/// Strict and relaxed micro metrics over a batch of evaluations.
pub fn evaluate_metrics(evals: &[SeriesEval], m: usize) -> Result<MetricReport> {
    let flags: Vec<Vec<bool>> = evals.iter().map(|e| e.flags.clone()).collect();
    let labels: Vec<Vec<bool>> = evals.iter().map(|e| e.labels.clone()).collect();
    MetricReport::evaluate(&flags, &labels, m)
}

/// The threshold over `scores` that maximizes F1 against `labels`, with ties
/// broken toward the higher threshold (flag rule: `score >= threshold`).
/// Returns the +infinity sentinel when there are no positive labels, so a
/// detector tuned on positive-free data never fires.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }
    let total_pos = labels.iter().filter(|&&l| l).count() as u64;
    if total_pos == 0 {
        return Ok(f64::INFINITY);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Sweep thresholds from high to low; at each distinct score, everything
    // at or above it is flagged. Strict improvement keeps the first (highest)
    // threshold on ties.
    let mut best_f1 = -1.0;
    let mut best_threshold = f64::INFINITY;
    let mut true_positives = 0u64;
    let mut flagged = 0u64;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            flagged += 1;
            if labels[order[i]] {
                true_positives += 1;
            }
            i += 1;
        }
        let confusion = crate::metrics::Confusion::new(
            true_positives,
            flagged - true_positives,
            total_pos - true_positives,
        );
        let f1 = confusion.f1();
        if f1 > best_f1 {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

/// Rolling z-scores: each point against the mean and standard deviation of
/// the `window` points strictly before it. The first `window` points carry
/// score 0 for lack of context.
pub fn baseline_zscore_scores(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::validation("z-score window must be at least 2"));
    }
    let mut scores = vec![0.0; values.len()];
    for t in window..values.len() {
        let context = &values[t - window..t];
        let mean = context.iter().sum::<f64>() / window as f64;
        let variance = context.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / window as f64;
        scores[t] = (values[t] - mean).abs() / variance.sqrt().max(1e-12);
    }
    Ok(scores)
}

/// Rolling z-score detector: flags `|x - mean| > threshold * std` over the
/// trailing window. An infinite threshold never fires, including on constant
/// stretches where the deviation and the deviation bound are both zero.
pub fn baseline_zscore(values: &[f64], window: usize, threshold: f64) -> Result<Vec<bool>> {
    if window < 2 {
        return Err(Error::validation("z-score window must be at least 2"));
    }
    let mut flags = vec![false; values.len()];
    for t in window..values.len() {
        let context = &values[t - window..t];
        let mean = context.iter().sum::<f64>() / window as f64;
        let variance = context.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / window as f64;
        flags[t] = (values[t] - mean).abs() > threshold * variance.sqrt();
    }
    Ok(flags)
}
