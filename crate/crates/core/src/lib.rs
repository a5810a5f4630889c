//! Robust anomaly detection for univariate time series.
//!
//! The toolkit decomposes a series into trend, seasonal, and remainder
//! components with a robust convex program, trains a small fully
//! convolutional encoder-decoder on remainder windows with a weighted
//! cross-entropy loss, enlarges scarce labeled data through time- and
//! frequency-domain augmentation, and scores points online with warm-started
//! incremental re-solves.
//!
//! Module map:
//!
//! * [`series`]: time-series containers, CSV I/O, splitting, windowing.
//! * [`decompose`]: bilateral denoising, `l1` trend extraction, seasonal
//!   extraction, periodicity detection.
//! * [`augment`]: spectrum round trip and label-preserving augmentations.
//! * [`net`]: the detection network with hand-written backpropagation.
//! * [`train`]: dataset preparation, training, evaluation, baselines.
//! * [`metrics`]: strict and position-tolerant detection metrics.
//! * [`stream`]: online scoring over a bounded history buffer.

pub mod augment;
pub mod decompose;
mod error;
pub mod metrics;
pub mod net;
pub mod series;
mod stats;
pub mod stream;
pub mod train;

pub use error::{Error, Result};
pub use series::{LabeledSeries, TimeSeries, WindowView};
