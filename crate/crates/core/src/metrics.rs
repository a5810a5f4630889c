//! Detection metrics for imbalanced point-anomaly classification.
//!
//! Two counting modes: strict (index equality) and relaxed (a prediction may
//! match an unmatched ground-truth anomaly up to `m` positions away). The
//! relaxed mode credits detectors that fire slightly early or late, which is
//! the norm for streaming detectors reacting to change points.

use serde::Serialize;

use crate::{Error, Result};

/// Point-level confusion counts. True negatives are omitted; they carry no
/// information under extreme class imbalance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl Confusion {
    pub fn new(true_positives: u64, false_positives: u64, false_negatives: u64) -> Self {
        Confusion {
            true_positives,
            false_positives,
            false_negatives,
        }
    }

    /// `tp / (tp + fp)`, or 0 when the denominator is 0.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// `tp / (tp + fn)`, or 0 when the denominator is 0.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    /// Harmonic mean of precision and recall, or 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: Confusion) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_lengths(predicted: &[bool], truth: &[bool]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::validation(format!(
            "prediction length {} does not match label length {}",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Counts exact index matches: a true positive requires `predicted[i] &&
/// truth[i]`.
pub fn confusion_strict(predicted: &[bool], truth: &[bool]) -> Result<Confusion> {
    check_lengths(predicted, truth)?;
    let mut c = Confusion::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Counts matches under a position tolerance of `m`: each prediction may pair
/// with one unmatched ground-truth anomaly at distance at most `m`, one-to-one.
///
/// Predictions are scanned in index order and each takes the earliest still
/// unmatched compatible truth. Because every prediction's compatible set is an
/// index interval and those intervals only advance, this greedy pairing
/// achieves the maximum possible number of matches.
pub fn confusion_relaxed(predicted: &[bool], truth: &[bool], m: usize) -> Result<Confusion> {
    check_lengths(predicted, truth)?;
    let truth_idx: Vec<i64> = truth
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| t.then_some(i as i64))
        .collect();
    let m = m as i64;

    let mut c = Confusion::default();
    let mut next_truth = 0usize;
    for (i, &p) in predicted.iter().enumerate() {
        if !p {
            continue;
        }
        let i = i as i64;
        // Truths left behind the current window can never match later
        // predictions; skipping them is permanent.
        while next_truth < truth_idx.len() && truth_idx[next_truth] < i - m {
            next_truth += 1;
        }
        if next_truth < truth_idx.len() && truth_idx[next_truth] <= i + m {
            c.true_positives += 1;
            next_truth += 1;
        } else {
            c.false_positives += 1;
        }
    }
    c.false_negatives = truth_idx.len() as u64 - c.true_positives;
    Ok(c)
}

/// Micro-averaged metrics: confusion counts are summed across series before
/// any ratio is taken, so long series weigh proportionally to their points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub totals: Confusion,
}

/// Sums per-series confusions and computes ratios once. An empty list is an
/// error: it would silently report a meaningless zero score.
pub fn micro_aggregate(confusions: &[Confusion]) -> Result<MicroMetrics> {
    if confusions.is_empty() {
        return Err(Error::validation(
            "cannot aggregate an empty list of confusion counts",
        ));
    }
    let mut totals = Confusion::default();
    for c in confusions {
        totals.add(*c);
    }
    Ok(MicroMetrics {
        precision: totals.precision(),
        recall: totals.recall(),
        f1: totals.f1(),
        totals,
    })
}

/// A full evaluation report: strict micro metrics, the relaxed F1 at lag `m`,
/// and the underlying counts.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub relaxed_f1: f64,
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
    pub m: usize,
    #[serde(skip)]
    pub strict: MicroMetrics,
    #[serde(skip)]
    pub relaxed: MicroMetrics,
}

impl MetricReport {
    /// Evaluates per-series predictions against labels in both modes.
    pub fn evaluate(predictions: &[Vec<bool>], truths: &[Vec<bool>], m: usize) -> Result<Self> {
        if predictions.len() != truths.len() {
            return Err(Error::validation(format!(
                "{} prediction series vs {} label series",
                predictions.len(),
                truths.len()
            )));
        }
        let strict: Vec<Confusion> = predictions
            .iter()
            .zip(truths)
            .map(|(p, t)| confusion_strict(p, t))
            .collect::<Result<_>>()?;
        let relaxed: Vec<Confusion> = predictions
            .iter()
            .zip(truths)
            .map(|(p, t)| confusion_relaxed(p, t, m))
            .collect::<Result<_>>()?;
        let strict = micro_aggregate(&strict)?;
        let relaxed = micro_aggregate(&relaxed)?;
        Ok(MetricReport {
            precision: strict.precision,
            recall: strict.recall,
            f1: strict.f1,
            relaxed_f1: relaxed.f1,
            true_positives: strict.totals.true_positives,
            false_positives: strict.totals.false_positives,
            false_negatives: strict.totals.false_negatives,
            m,
            strict,
            relaxed,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "precision  = {:.4}", self.precision)?;
        writeln!(f, "recall     = {:.4}", self.recall)?;
        writeln!(f, "f1         = {:.4}", self.f1)?;
        writeln!(f, "relaxed_f1 = {:.4} (m = {})", self.relaxed_f1, self.m)?;
        write!(
            f,
            "tp = {}, fp = {}, fn = {}",
            self.true_positives, self.false_positives, self.false_negatives
        )
    }
}
