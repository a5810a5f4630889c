//! Online scoring over a bounded history buffer.
//!
//! The stream keeps the most recent points (raw values plus their current
//! trend and seasonal attributions), re-runs the decomposition every
//! `resolve_every` pushes with a warm-started trend solve, and extrapolates
//! between re-solves: the trend continues along its last slope and the
//! seasonal component repeats the per-phase profile. Every push scores the
//! newest point by running the detection network over the trailing window of
//! remainders.
//!
//! Between re-solves the work per push is the network forward pass plus O(1)
//! bookkeeping; a re-solve costs one denoising pass, one periodicity check,
//! and one warm trend solve over the buffer, all linear or near-linear in the
//! buffer length. Memory never exceeds the configured buffer.

use serde::{Deserialize, Serialize};

use crate::decompose::{
    bilateral_denoise, detect_period, phase_median_profile, DecomposeConfig, PeriodEstimate,
    TrendFit, TrendSolver,
};
use crate::net::{predict_last, InputMode, Network};
use crate::{Error, Result};

/// Streaming parameters. The scoring window length comes from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    /// Points of history kept; must be at least the model's window.
    pub buffer_len: usize,
    /// Pushes between decomposition re-solves.
    pub resolve_every: usize,
    /// Scores at or above this flag an anomaly.
    pub threshold: f64,
    /// Decomposition parameters used at every re-solve.
    pub decompose: DecomposeConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            buffer_len: 4 * crate::series::DEFAULT_WINDOW,
            resolve_every: 5,
            threshold: 0.5,
            decompose: DecomposeConfig::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolve_every == 0 {
            return Err(Error::validation("resolve interval must be at least 1"));
        }
        if !(self.threshold.is_finite() && (0.0..=1.0).contains(&self.threshold)) {
            return Err(Error::validation("threshold must lie in [0, 1]"));
        }
        self.decompose.validate()
    }
}

/// The verdict for one pushed point.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    /// Zero-based index of the point among all pushed points.
    pub index: u64,
    /// Network score for the point, in [0, 1]; 0 during warm-up.
    pub score: f64,
    pub is_anomaly: bool,
    /// The point's current trend attribution.
    pub trend: f64,
    /// The point's current seasonal attribution.
    pub seasonal: f64,
    /// `value - trend - seasonal`; what the network actually sees.
    pub remainder: f64,
    /// False until the buffer holds one full scoring window.
    pub warmed_up: bool,
    /// True while the stream is extrapolating past a failed re-solve.
    pub degraded: bool,
}

/// Online scorer: bounded buffer, periodic warm re-solves, per-push scoring.
pub struct StreamState {
    config: StreamConfig,
    model: Network,
    /// Raw values, oldest first; never longer than `buffer_len`.
    values: Vec<f64>,
    /// Per-point trend attribution, aligned with `values`.
    trend: Vec<f64>,
    /// Per-point seasonal attribution, aligned with `values`.
    seasonal: Vec<f64>,
    /// Last successful trend solve, reused as a warm start.
    fit: Option<TrendFit>,
    /// Seasonal profile from the last re-solve; empty when aperiodic.
    profile: Vec<f64>,
    /// Absolute index that phase 0 of `profile` refers to.
    profile_anchor: u64,
    /// Trend slope at the end of the last re-solve, used to extrapolate.
    slope: f64,
    /// Points seen, including prefilled history.
    seen: u64,
    /// Points pushed through `push` (verdict indices).
    emitted: u64,
    since_solve: usize,
    evicted_since_solve: usize,
    degraded: bool,
}

impl StreamState {
    /// Creates a stream scorer. `history` prefills the buffer (only its tail
    /// is kept) so scoring can begin immediately; pass an empty slice to
    /// start cold.
    pub fn new(model: Network, config: StreamConfig, history: &[f64]) -> Result<Self> {
        config.validate()?;
        if model.config().input_channels != 1 {
            return Err(Error::validation(
                "streaming supports single-channel models only",
            ));
        }
        if config.buffer_len < model.config().window {
            return Err(Error::validation(format!(
                "buffer of {} cannot hold the model's window of {}",
                config.buffer_len,
                model.config().window
            )));
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("history must be finite"));
        }

        let tail = history.len().saturating_sub(config.buffer_len);
        let values: Vec<f64> = history[tail..].to_vec();
        let resolve_every = config.resolve_every;
        let mut state = StreamState {
            config,
            model,
            trend: vec![0.0; values.len()],
            seasonal: vec![0.0; values.len()],
            values,
            fit: None,
            profile: Vec::new(),
            profile_anchor: 0,
            slope: 0.0,
            seen: history.len() as u64,
            emitted: 0,
            since_solve: resolve_every,
            evicted_since_solve: 0,
            degraded: false,
        };
        if state.solve_ready() {
            state.resolve();
        }
        Ok(state)
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn model(&self) -> &Network {
        &self.model
    }

    /// Points currently buffered; bounded by `buffer_len`.
    pub fn buffered(&self) -> usize {
        self.values.len()
    }

    pub fn is_warmed_up(&self) -> bool {
        self.values.len() >= self.model.config().window
    }

    /// Replaces the model mid-stream. The replacement must fit the buffer
    /// and stay single-channel; scores simply continue with the new model.
    pub fn swap_model(&mut self, model: Network) -> Result<()> {
        if model.config().input_channels != 1 {
            return Err(Error::validation(
                "streaming supports single-channel models only",
            ));
        }
        if model.config().window > self.config.buffer_len {
            return Err(Error::validation(format!(
                "replacement window {} exceeds the buffer of {}",
                model.config().window,
                self.config.buffer_len
            )));
        }
        self.model = model;
        Ok(())
    }

    /// Absolute index of the oldest buffered point.
    fn buffer_start(&self) -> u64 {
        self.seen - self.values.len() as u64
    }

    fn solve_ready(&self) -> bool {
        self.model.config().input_mode == InputMode::Remainder && self.is_warmed_up()
    }

    fn solve_due(&self) -> bool {
        self.solve_ready() && (self.fit.is_none() || self.since_solve >= self.config.resolve_every)
    }

    /// Seasonal attribution for an absolute index, from the current profile.
    fn seasonal_at(&self, absolute: u64) -> f64 {
        if self.profile.is_empty() {
            0.0
        } else {
            self.profile[((absolute - self.profile_anchor) % self.profile.len() as u64) as usize]
        }
    }

    /// Re-runs the decomposition over the whole buffer: denoise, re-check
    /// periodicity, warm-started trend solve, seasonal profile refresh. On
    /// solver failure the previous attributions stay in place and the stream
    /// reports itself degraded until a later re-solve succeeds.
    fn resolve(&mut self) {
        let n = self.values.len();
        let cfg = &self.config.decompose;
        let denoised = bilateral_denoise(&self.values, cfg);

        let period = match detect_period(&denoised) {
            PeriodEstimate::Periodic { period } if period >= 2 && n >= 2 * period => period,
            _ => 0,
        };

        // Seasonal estimate entering the trend solve: the buffer's current
        // attribution, or a fresh profile on the first periodic solve.
        // Bootstrap the profile whenever none is held, not only on the very
        // first solve: a stream that warmed up before the buffer could
        // support period detection has already run trend-only solves, and
        // reusing its all-zero seasonal here would hand the cycle to the
        // trend permanently (the detrended residual then holds no seasonal
        // to re-profile, which locks the zero in).
        let seasonal_guess: Vec<f64> = if period == 0 {
            vec![0.0; n]
        } else if !self.profile.is_empty() {
            self.seasonal.clone()
        } else {
            let profile = phase_median_profile(&denoised, period);
            (0..n).map(|i| profile[i % period]).collect()
        };

        let deseasonalized: Vec<f64> = (0..n).map(|i| denoised[i] - seasonal_guess[i]).collect();
        let warm = self
            .fit
            .as_ref()
            .map(|fit| fit.shifted(self.evicted_since_solve, &deseasonalized));

        let solved = TrendSolver::new(n, cfg.lambda1, cfg.lambda2, cfg.solver)
            .and_then(|solver| solver.solve(&deseasonalized, warm.as_ref()));
        let fit = match solved {
            Ok(fit) => fit,
            Err(_) => {
                self.degraded = true;
                if self.fit.is_none() {
                    // Never solved: fall back to treating the denoised signal
                    // as trend so the remainder still isolates fast spikes.
                    self.trend = denoised;
                    self.seasonal = vec![0.0; n];
                    self.slope = 0.0;
                }
                return;
            }
        };

        self.degraded = false;
        self.since_solve = 0;
        self.evicted_since_solve = 0;
        self.slope = fit.trend[n - 1] - fit.trend[n - 2];
        self.trend = fit.trend.clone();

        if period == 0 {
            self.profile = Vec::new();
            self.seasonal = vec![0.0; n];
        } else {
            let detrended: Vec<f64> = (0..n).map(|i| denoised[i] - self.trend[i]).collect();
            self.profile = phase_median_profile(&detrended, period);
            self.profile_anchor = self.buffer_start();
            self.seasonal = (0..n).map(|i| self.profile[i % period]).collect();
        }
        self.fit = Some(fit);
    }

    /// Ingests one point and scores it. Verdicts during warm-up carry a zero
    /// score and never flag.
    pub fn push(&mut self, value: f64) -> Result<Verdict> {
        if !value.is_finite() {
            return Err(Error::validation(format!("non-finite value {value}")));
        }

        let absolute = self.seen;
        self.seen += 1;
        let index = self.emitted;
        self.emitted += 1;
        self.since_solve += 1;

        self.values.push(value);
        let raw_mode = self.model.config().input_mode == InputMode::Raw;
        if raw_mode {
            self.trend.push(0.0);
            self.seasonal.push(0.0);
        } else {
            let extrapolated = match self.trend.last() {
                Some(last) if self.fit.is_some() => last + self.slope,
                Some(_) | None => value,
            };
            self.trend.push(extrapolated);
            self.seasonal.push(self.seasonal_at(absolute));
        }
        if self.values.len() > self.config.buffer_len {
            let excess = self.values.len() - self.config.buffer_len;
            self.values.drain(..excess);
            self.trend.drain(..excess);
            self.seasonal.drain(..excess);
            self.evicted_since_solve += excess;
        }

        if self.solve_due() {
            self.resolve();
        }

        let n = self.values.len();
        let trend = self.trend[n - 1];
        let seasonal = self.seasonal[n - 1];
        let remainder = self.values[n - 1] - trend - seasonal;

        if !self.is_warmed_up() {
            return Ok(Verdict {
                index,
                score: 0.0,
                is_anomaly: false,
                trend,
                seasonal,
                remainder,
                warmed_up: false,
                degraded: self.degraded,
            });
        }

        let window = self.model.config().window;
        let input: Vec<f64> = if raw_mode {
            self.values[n - window..].to_vec()
        } else {
            (n - window..n)
                .map(|i| self.values[i] - self.trend[i] - self.seasonal[i])
                .collect()
        };
        let (score, is_anomaly) = predict_last(&self.model, &input, self.config.threshold)?;

        Ok(Verdict {
            index,
            score,
            is_anomaly,
            trend,
            seasonal,
            remainder,
            warmed_up: true,
            degraded: self.degraded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    fn tiny_model(window: usize, mode: InputMode) -> Network {
        let config = NetConfig {
            input_mode: mode,
            depth: 2,
            base_channels: 2,
            window,
            ..NetConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        Network::new(config, &mut rng).unwrap()
    }

    fn periodic_signal(n: usize, period: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| {
                2.0 * (TAU * t as f64 / period as f64).sin()
                    + (rng.random::<f64>() - 0.5) * 0.1
            })
            .collect()
    }

    fn stream_config(buffer_len: usize, resolve_every: usize) -> StreamConfig {
        StreamConfig {
            buffer_len,
            resolve_every,
            ..StreamConfig::default()
        }
    }

    #[test]
    fn warm_up_gates_scores_and_attribution_is_additive() {
        let window = 16;
        let model = tiny_model(window, InputMode::Remainder);
        let mut stream =
            StreamState::new(model, stream_config(64, 5), &[]).unwrap();

        for (t, &value) in periodic_signal(80, 8, 1).iter().enumerate() {
            let v = stream.push(value).unwrap();
            assert_eq!(v.index, t as u64);
            assert_eq!(v.warmed_up, t + 1 >= window, "push {t}");
            if !v.warmed_up {
                assert_eq!(v.score, 0.0);
                assert!(!v.is_anomaly);
            } else {
                assert!((0.0..=1.0).contains(&v.score));
            }
            let rebuilt = v.trend + v.seasonal + v.remainder;
            assert!((rebuilt - value).abs() <= 1e-9, "push {t}: {rebuilt} vs {value}");
        }
    }

    #[test]
    fn buffer_never_exceeds_its_bound() {
        let model = tiny_model(16, InputMode::Remainder);
        let mut stream = StreamState::new(model, stream_config(48, 4), &[]).unwrap();
        for (t, value) in periodic_signal(500, 8, 2).into_iter().enumerate() {
            stream.push(value).unwrap();
            assert!(stream.buffered() <= 48, "push {t}: {}", stream.buffered());
        }
        assert_eq!(stream.buffered(), 48);
    }

    #[test]
    fn history_prefill_scores_from_the_first_push() {
        let model = tiny_model(16, InputMode::Remainder);
        let history = periodic_signal(64, 8, 3);
        let mut stream = StreamState::new(model, stream_config(64, 5), &history).unwrap();
        assert!(stream.is_warmed_up());
        let v = stream.push(0.0).unwrap();
        assert_eq!(v.index, 0);
        assert!(v.warmed_up);
    }

    #[test]
    fn raw_mode_passes_values_straight_through() {
        let model = tiny_model(16, InputMode::Raw);
        let mut stream = StreamState::new(model, stream_config(32, 5), &[]).unwrap();
        for value in periodic_signal(60, 8, 4) {
            let v = stream.push(value).unwrap();
            assert_eq!(v.trend, 0.0);
            assert_eq!(v.seasonal, 0.0);
            assert_eq!(v.remainder, value);
        }
    }

    #[test]
    fn cold_start_acquires_the_seasonal_component() {
        // Warm-up ends before the buffer can support period detection, so
        // the earliest solves are trend-only. Once enough cycles accumulate,
        // the seasonal must still claim the oscillation; a trend that keeps
        // it would diverge from the signal between reduced-rate re-solves.
        let window = 16;
        let period = 24;
        let model = tiny_model(window, InputMode::Remainder);
        let mut stream =
            StreamState::new(model, stream_config(240, 5), &[]).unwrap();

        let mut late_seasonal_peak = 0.0f64;
        for (t, value) in periodic_signal(600, period, 6).into_iter().enumerate() {
            let v = stream.push(value).unwrap();
            if t >= 480 {
                late_seasonal_peak = late_seasonal_peak.max(v.seasonal.abs());
            }
        }
        assert!(
            late_seasonal_peak > 1.0,
            "seasonal never exceeded {late_seasonal_peak} on a sine of amplitude 2"
        );
    }

    #[test]
    fn trend_absorbs_a_level_shift_within_the_resolve_interval() {
        let window = 16;
        let resolve_every = 5;
        let model = tiny_model(window, InputMode::Remainder);
        let mut stream =
            StreamState::new(model, stream_config(96, resolve_every), &[]).unwrap();

        let period = 8;
        let shift_at = 200;
        let mut shifted_remainders = Vec::new();
        for t in 0..320 {
            let mut value = 2.0 * (TAU * t as f64 / period as f64).sin();
            if t >= shift_at {
                value += 6.0;
            }
            let v = stream.push(value).unwrap();
            if t >= shift_at {
                shifted_remainders.push(v.remainder.abs());
            }
        }
        // The shift shows up in the remainder immediately...
        assert!(
            shifted_remainders[0] > 3.0,
            "shift invisible at onset: {}",
            shifted_remainders[0]
        );
        // ...and the trend absorbs it once enough shifted points accumulate
        // for the absolute-deviation objective to prefer following the step.
        // That robustness is deliberate, so allow several re-solve cycles.
        for (offset, r) in shifted_remainders.iter().enumerate().skip(40) {
            assert!(
                *r < 1.5,
                "remainder still {r} at {offset} pushes past the shift"
            );
        }
    }

    #[test]
    fn warm_starts_cut_solver_iterations() {
        let model = tiny_model(16, InputMode::Remainder);
        let mut stream = StreamState::new(model, stream_config(64, 5), &[]).unwrap();
        let signal = periodic_signal(200, 8, 6);
        for &value in &signal {
            stream.push(value).unwrap();
        }
        let warm_iterations = stream.fit.as_ref().unwrap().iterations;

        // Cold-solve the same deseasonalized buffer for comparison.
        let cfg = &stream.config.decompose;
        let denoised = bilateral_denoise(&stream.values, cfg);
        let deseasonalized: Vec<f64> = (0..stream.values.len())
            .map(|i| denoised[i] - stream.seasonal[i])
            .collect();
        let solver =
            TrendSolver::new(deseasonalized.len(), cfg.lambda1, cfg.lambda2, cfg.solver).unwrap();
        let cold = solver.solve(&deseasonalized, None).unwrap();

        assert!(
            warm_iterations < cold.iterations,
            "warm {warm_iterations} vs cold {}",
            cold.iterations
        );
        let warm_restart = solver
            .solve(&deseasonalized, Some(stream.fit.as_ref().unwrap()))
            .unwrap();
        assert!((warm_restart.objective - cold.objective).abs() <= 1e-6 * cold.objective.max(1.0));
    }

    #[test]
    fn failed_solves_degrade_instead_of_failing() {
        let model = tiny_model(16, InputMode::Remainder);
        let mut config = stream_config(48, 3);
        config.decompose.solver.max_iterations = 1;
        let mut stream = StreamState::new(model, config, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut saw_degraded = false;
        for t in 0..120 {
            let value = (t as f64 * 0.7).sin() * 3.0 + rng.random::<f64>();
            let v = stream.push(value).unwrap();
            if v.warmed_up {
                saw_degraded |= v.degraded;
                assert!(v.score.is_finite());
            }
        }
        assert!(saw_degraded, "solver was expected to miss its iteration cap");
    }

    #[test]
    fn construction_and_swap_reject_mismatched_shapes() {
        let model = tiny_model(16, InputMode::Remainder);
        assert!(StreamState::new(model.clone(), stream_config(8, 5), &[]).is_err());
        let bad_history = [1.0, f64::NAN];
        assert!(StreamState::new(model.clone(), stream_config(32, 5), &bad_history).is_err());

        let mut stream = StreamState::new(model, stream_config(32, 5), &[]).unwrap();
        let too_wide = tiny_model(64, InputMode::Remainder);
        assert!(stream.swap_model(too_wide).is_err());
        let fits = tiny_model(32, InputMode::Remainder);
        assert!(stream.swap_model(fits).is_ok());
    }

    #[test]
    fn rejects_non_finite_points() {
        let model = tiny_model(16, InputMode::Remainder);
        let mut stream = StreamState::new(model, stream_config(32, 5), &[]).unwrap();
        assert!(stream.push(f64::INFINITY).is_err());
        assert!(stream.push(f64::NAN).is_err());
        assert!(stream.push(1.0).is_ok());
    }
}
