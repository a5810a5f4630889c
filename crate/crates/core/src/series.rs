//! Time-series containers, CSV I/O, train/test splitting, and windowing.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// A univariate series with strictly increasing integer timestamps and
/// finite values. Both invariants are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::validation(format!(
                "timestamp/value length mismatch: {} vs {}",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(Error::validation(format!(
                "timestamps not strictly increasing at index {i}: {} then {}",
                timestamps[i - 1],
                timestamps[i]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(TimeSeries { timestamps, values })
    }

    /// Builds a series indexed 0..n-1, for data without explicit timestamps.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let timestamps = (0..values.len() as i64).collect();
        TimeSeries::new(timestamps, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Enumerates sliding windows of width `window` advancing by `stride`.
    /// Yields `floor((n - window) / stride) + 1` views when `window <= n`,
    /// and no views at all when the series is shorter than one window.
    pub fn windows(&self, window: usize, stride: usize) -> Result<Vec<WindowView>> {
        window_starts(self.len(), window, stride)
    }
}

/// A time series paired with a boolean anomaly label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    series: TimeSeries,
    labels: Vec<bool>,
}

impl LabeledSeries {
    pub fn new(series: TimeSeries, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != series.len() {
            return Err(Error::validation(format!(
                "label length {} does not match series length {}",
                labels.len(),
                series.len()
            )));
        }
        Ok(LabeledSeries { series, labels })
    }

    /// Wraps a series with every point labeled normal.
    pub fn unlabeled(series: TimeSeries) -> Self {
        let labels = vec![false; series.len()];
        LabeledSeries { series, labels }
    }

    pub fn from_parts(timestamps: Vec<i64>, values: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        LabeledSeries::new(TimeSeries::new(timestamps, values)?, labels)
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        self.series.values()
    }

    pub fn timestamps(&self) -> &[i64] {
        self.series.timestamps()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn windows(&self, window: usize, stride: usize) -> Result<Vec<WindowView>> {
        window_starts(self.len(), window, stride)
    }

    /// Extracts the sub-series covered by `view`.
    pub fn slice(&self, view: WindowView) -> Result<LabeledSeries> {
        let end = view.end();
        if end > self.len() {
            return Err(Error::validation(format!(
                "window [{}, {end}) exceeds series length {}",
                view.start,
                self.len()
            )));
        }
        LabeledSeries::from_parts(
            self.timestamps()[view.start..end].to_vec(),
            self.values()[view.start..end].to_vec(),
            self.labels[view.start..end].to_vec(),
        )
    }
}

/// A half-open index range `[start, start + len)` into a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowView {
    pub start: usize,
    pub len: usize,
}

impl WindowView {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Default detection window width.
pub const DEFAULT_WINDOW: usize = 240;

fn window_starts(n: usize, window: usize, stride: usize) -> Result<Vec<WindowView>> {
    if window == 0 {
        return Err(Error::validation("window width must be positive"));
    }
    if stride == 0 {
        return Err(Error::validation("window stride must be positive"));
    }
    if window > n {
        return Ok(Vec::new());
    }
    Ok((0..=(n - window))
        .step_by(stride)
        .map(|start| WindowView { start, len: window })
        .collect())
}

/// Splits a labeled series into a training prefix of `floor(n / 2)` points
/// and a test suffix holding the rest. Timestamps are preserved.
pub fn split_train_test(series: &LabeledSeries) -> Result<(LabeledSeries, LabeledSeries)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::validation(format!(
            "cannot split series of length {n}; need at least 2 points"
        )));
    }
    let mid = n / 2;
    let train = series.slice(WindowView { start: 0, len: mid })?;
    let test = series.slice(WindowView {
        start: mid,
        len: n - mid,
    })?;
    Ok((train, test))
}

/// Loads a labeled series from CSV.
///
/// Expected schema: `timestamp,value[,is_anomaly]` with an optional header
/// row. Labels are `0` or `1`; when the column is absent every point is
/// labeled normal. Errors name the offending physical row number (1-based,
/// counting the header).
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(BufReader::new(file))
}

/// Parses CSV from any reader; see [`load_csv`] for the schema.
pub fn read_csv(reader: impl BufRead) -> Result<LabeledSeries> {
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut arity: Option<usize> = None;

    for (index, line) in reader.lines().enumerate() {
        let row = index + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty row".to_string(),
            });
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        // Header detection: a first row whose initial field is not numeric.
        if row == 1 && fields[0].parse::<i64>().is_err() && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Parse {
                row,
                message: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {a} fields, found {}", fields.len()),
                });
            }
            Some(_) => {}
        }

        let timestamp: i64 = fields[0].parse().map_err(|_| Error::Parse {
            row,
            message: format!("malformed timestamp {:?}", fields[0]),
        })?;
        let value: f64 = fields[1].parse().map_err(|_| Error::Parse {
            row,
            message: format!("malformed value {:?}", fields[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("non-finite value {:?}", fields[1]),
            });
        }
        let label = if fields.len() == 3 {
            match fields[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        row,
                        message: format!("malformed label {other:?}; expected 0 or 1"),
                    });
                }
            }
        } else {
            false
        };

        timestamps.push(timestamp);
        values.push(value);
        labels.push(label);
    }

    LabeledSeries::from_parts(timestamps, values, labels)
}

/// Writes a labeled series as `timestamp,value,is_anomaly` CSV with a header.
/// Values print with enough precision to round-trip exactly.
pub fn save_csv(series: &LabeledSeries, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    write_csv(series, &mut writer)
}

/// Writes CSV to any writer; see [`save_csv`].
pub fn write_csv(series: &LabeledSeries, writer: &mut impl Write) -> Result<()> {
    writeln!(writer, "timestamp,value,is_anomaly")?;
    for i in 0..series.len() {
        writeln!(
            writer,
            "{},{},{}",
            series.timestamps()[i],
            series.values()[i],
            u8::from(series.labels()[i])
        )?;
    }
    writer.flush()?;
    Ok(())
}
