//! Label-preserving augmentation for scarce anomaly data.
//!
//! Time-domain transforms (flip, downsample, crop, label expansion) and
//! frequency-domain transforms (segment-wise magnitude replacement, per-bin
//! phase jitter) enlarge a labeled training set without inventing labels:
//! every transform carries the existing labels through unchanged positions,
//! and label expansion only ever adds positives.

mod spectrum;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::series::LabeledSeries;
use crate::{Error, Result};

pub use spectrum::{dft, idft, Spectrum};

/// Mean used when redrawing amplitudes of a selected segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeMean {
    /// Draw around zero: selected bands are mostly erased.
    Zero,
    /// Draw around the segment's own mean amplitude: bands are perturbed.
    SegmentMean,
}

/// Which transforms run and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub flip: bool,
    pub downsample: bool,
    pub crop: bool,
    pub expand_labels: bool,
    pub magnitude: bool,
    pub phase: bool,

    /// Keep every k-th point when downsampling.
    pub downsample_rate: usize,
    /// Length of a random crop.
    pub crop_length: usize,
    /// Label expansion time radius.
    pub label_time_radius: usize,
    /// Label expansion value tolerance.
    pub label_value_tolerance: f64,

    /// Segment length as a fraction of the half spectrum.
    pub segment_ratio: f64,
    /// Number of segments to redraw.
    pub segment_count: usize,
    /// Mean of redrawn amplitudes.
    pub magnitude_mean: MagnitudeMean,
    /// Variance of redrawn amplitudes, as a multiple of the segment's own
    /// amplitude variance.
    pub magnitude_variance_factor: f64,
    /// Variance of the per-bin phase offsets.
    pub phase_variance: f64,

    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            flip: true,
            downsample: true,
            crop: false,
            expand_labels: false,
            magnitude: true,
            phase: true,
            downsample_rate: 2,
            crop_length: crate::series::DEFAULT_WINDOW,
            label_time_radius: 2,
            label_value_tolerance: 0.1,
            segment_ratio: 0.05,
            segment_count: 1,
            magnitude_mean: MagnitudeMean::Zero,
            magnitude_variance_factor: 0.1,
            phase_variance: 0.5,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.downsample_rate < 2 {
            return Err(Error::validation("downsample rate must be at least 2"));
        }
        if self.crop_length == 0 {
            return Err(Error::validation("crop length must be positive"));
        }
        if !(self.segment_ratio > 0.0 && self.segment_ratio < 1.0) {
            return Err(Error::validation("segment ratio must lie in (0, 1)"));
        }
        if !(self.magnitude_variance_factor.is_finite() && self.magnitude_variance_factor >= 0.0) {
            return Err(Error::validation("magnitude variance factor must be non-negative"));
        }
        if !(self.phase_variance.is_finite() && self.phase_variance >= 0.0) {
            return Err(Error::validation("phase variance must be non-negative"));
        }
        if !(self.label_value_tolerance.is_finite() && self.label_value_tolerance >= 0.0) {
            return Err(Error::validation("label value tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Negates every value; timestamps and labels are untouched. An involution.
pub fn flip(series: &LabeledSeries) -> LabeledSeries {
    let values = series.values().iter().map(|v| -v).collect();
    LabeledSeries::from_parts(series.timestamps().to_vec(), values, series.labels().to_vec())
        .expect("negation preserves every series invariant")
}

/// Keeps every `rate`-th point, producing exactly `floor(n / rate)` points.
/// A series shorter than `rate` is an error: it would vanish entirely.
pub fn downsample(series: &LabeledSeries, rate: usize) -> Result<LabeledSeries> {
    if rate < 2 {
        return Err(Error::validation("downsample rate must be at least 2"));
    }
    let n = series.len();
    let kept = n / rate;
    if kept == 0 {
        return Err(Error::validation(format!(
            "cannot downsample {n} points at rate {rate}: nothing would remain"
        )));
    }
    let mut timestamps = Vec::with_capacity(kept);
    let mut values = Vec::with_capacity(kept);
    let mut labels = Vec::with_capacity(kept);
    for i in 0..kept {
        let j = i * rate;
        timestamps.push(series.timestamps()[j]);
        values.push(series.values()[j]);
        labels.push(series.labels()[j]);
    }
    LabeledSeries::from_parts(timestamps, values, labels)
}

/// Takes a contiguous crop of `length` points starting uniformly at random.
pub fn crop(series: &LabeledSeries, length: usize, rng: &mut impl Rng) -> Result<LabeledSeries> {
    let n = series.len();
    if length == 0 {
        return Err(Error::validation("crop length must be positive"));
    }
    if length > n {
        return Err(Error::validation(format!(
            "crop length {length} exceeds series length {n}"
        )));
    }
    let start = rng.random_range(0..=n - length);
    series.slice(crate::series::WindowView { start, len: length })
}

/// Marks as anomalous every point within `time_radius` of an existing
/// anomaly whose value is within `value_tolerance` of that anomaly's value.
/// Existing labels are never removed.
pub fn label_expansion(
    series: &LabeledSeries,
    time_radius: usize,
    value_tolerance: f64,
) -> LabeledSeries {
    let n = series.len();
    let values = series.values();
    let mut labels = series.labels().to_vec();
    for center in 0..n {
        if !series.labels()[center] {
            continue;
        }
        let lo = center.saturating_sub(time_radius);
        let hi = (center + time_radius).min(n - 1);
        for t in lo..=hi {
            if (values[t] - values[center]).abs() <= value_tolerance {
                labels[t] = true;
            }
        }
    }
    LabeledSeries::from_parts(series.timestamps().to_vec(), values.to_vec(), labels)
        .expect("labels were only added")
}

/// Number of attempts to place segments before giving up.
const SEGMENT_ATTEMPTS: usize = 1000;

/// Picks `count` segments of length `round(ratio * bins)` (at least 1) with
/// uniformly random starts, re-sampling until all pairwise start distances
/// are at least half a segment. Infeasible requests fail immediately.
pub fn select_segments(
    bins: usize,
    ratio: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Range<usize>>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation("segment ratio must lie in (0, 1)"));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let k = ((ratio * bins as f64).round() as usize).max(1);
    if k > bins {
        return Err(Error::validation(format!(
            "segment length {k} exceeds spectrum size {bins}"
        )));
    }
    let spacing = k.div_ceil(2);
    if (count - 1) * spacing + k > bins {
        return Err(Error::validation(format!(
            "cannot place {count} segments of length {k} in {bins} bins with spacing {spacing}"
        )));
    }

    for _ in 0..SEGMENT_ATTEMPTS {
        let mut starts: Vec<usize> = (0..count).map(|_| rng.random_range(0..=bins - k)).collect();
        starts.sort_unstable();
        let ok = starts.windows(2).all(|w| w[1] - w[0] >= spacing);
        if ok {
            return Ok(starts.into_iter().map(|s| s..s + k).collect());
        }
    }
    Err(Error::validation(format!(
        "failed to place {count} spaced segments after {SEGMENT_ATTEMPTS} attempts"
    )))
}

/// Redraws the amplitude of randomly selected spectrum segments from a
/// Gaussian matched to each segment's own statistics, then transforms back.
/// Labels and timestamps are unchanged; the series length is preserved.
pub fn magnitude_augment(
    series: &LabeledSeries,
    policy: &AugmentPolicy,
    rng: &mut impl Rng,
) -> Result<LabeledSeries> {
    policy.validate()?;
    let mut spectrum = dft(series.values())?;
    let segments = select_segments(spectrum.bins(), policy.segment_ratio, policy.segment_count, rng)?;
    for segment in segments {
        let amps = &spectrum.amplitude[segment.clone()];
        let mean = match policy.magnitude_mean {
            MagnitudeMean::Zero => 0.0,
            MagnitudeMean::SegmentMean => amps.iter().sum::<f64>() / amps.len() as f64,
        };
        // Sample variance (n - 1 denominator); a single bin has none.
        let variance = if amps.len() < 2 {
            0.0
        } else {
            let m = amps.iter().sum::<f64>() / amps.len() as f64;
            amps.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (amps.len() - 1) as f64
        };
        let sigma = (policy.magnitude_variance_factor * variance).sqrt();
        for k in segment {
            let draw = if sigma > 0.0 {
                Normal::new(mean, sigma)
                    .map_err(|e| Error::Numeric(format!("bad amplitude distribution: {e}")))?
                    .sample(rng)
            } else {
                mean
            };
            spectrum.amplitude[k] = draw.max(0.0);
        }
    }
    rebuild(series, &spectrum)
}

/// Adds an independent Gaussian offset to every interior phase bin. The DC
/// bin and (for even lengths) the Nyquist bin stay untouched, so the series
/// mean is preserved and the output stays real. Amplitudes are unchanged.
pub fn phase_augment(
    series: &LabeledSeries,
    policy: &AugmentPolicy,
    rng: &mut impl Rng,
) -> Result<LabeledSeries> {
    policy.validate()?;
    let mut spectrum = dft(series.values())?;
    let sigma = policy.phase_variance.sqrt();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Numeric(format!("bad phase distribution: {e}")))?;
        for k in 0..spectrum.bins() {
            if spectrum.is_real_bin(k) {
                continue;
            }
            spectrum.phase[k] += normal.sample(rng);
        }
    }
    rebuild(series, &spectrum)
}

fn rebuild(series: &LabeledSeries, spectrum: &Spectrum) -> Result<LabeledSeries> {
    let values = idft(spectrum);
    LabeledSeries::from_parts(
        series.timestamps().to_vec(),
        values,
        series.labels().to_vec(),
    )
}

/// A named augmented variant of a source series.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: &'static str,
    pub series: LabeledSeries,
}

/// Generates every enabled variant in a fixed order. When label expansion is
/// enabled it is applied to the source first, so all variants inherit the
/// expanded labels. Transforms that cannot apply (for example a crop longer
/// than the series) are reported as errors, not skipped.
pub fn variants(
    series: &LabeledSeries,
    policy: &AugmentPolicy,
    rng: &mut impl Rng,
) -> Result<Vec<Variant>> {
    policy.validate()?;
    let source = if policy.expand_labels {
        label_expansion(series, policy.label_time_radius, policy.label_value_tolerance)
    } else {
        series.clone()
    };

    let mut out = vec![Variant {
        name: "original",
        series: source.clone(),
    }];
    if policy.flip {
        out.push(Variant {
            name: "flip",
            series: flip(&source),
        });
    }
    if policy.downsample {
        out.push(Variant {
            name: "downsample",
            series: downsample(&source, policy.downsample_rate)?,
        });
    }
    if policy.crop {
        out.push(Variant {
            name: "crop",
            series: crop(&source, policy.crop_length, rng)?,
        });
    }
    if policy.magnitude {
        out.push(Variant {
            name: "magnitude",
            series: magnitude_augment(&source, policy, rng)?,
        });
    }
    if policy.phase {
        out.push(Variant {
            name: "phase",
            series: phase_augment(&source, policy, rng)?,
        });
    }
    Ok(out)
}
