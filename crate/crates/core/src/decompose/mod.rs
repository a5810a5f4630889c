//! Robust decomposition of a series into trend, seasonal, and remainder.
//!
//! The pipeline denoises with a bilateral filter, extracts a piecewise-smooth
//! trend with an absolute-deviation objective, extracts the seasonal
//! component by averaging same-phase points across neighboring periods, and
//! alternates the last two until the components settle. A periodicity gate
//! routes aperiodic series through trend extraction alone.
//!
//! Anomalies survive into the remainder because every stage bounds their
//! influence: the bilateral and seasonal filters weight by value distance,
//! and the trend objective is absolute rather than squared.

mod bilateral;
mod period;
mod seasonal;
mod trend;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::series::TimeSeries;
use crate::{Error, Result};

pub use bilateral::{adaptive_value_sigma, bilateral_filter};
pub use period::{detect_period, PeriodEstimate};
pub use seasonal::extract_seasonal;
pub(crate) use seasonal::phase_median_profile;
pub use trend::{SolverConfig, TrendFit, TrendSolver};

/// Parameters for the decomposition pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    /// Half window `H` for the bilateral filter and the seasonal phase
    /// jitter.
    pub half_window: usize,
    /// Distance scale of the denoising kernel.
    pub sigma_d: f64,
    /// Value scale of the denoising kernel; `None` adapts to the robust
    /// noise estimate of the series.
    pub sigma_i: Option<f64>,
    /// First-difference penalty of the trend objective. Larger values
    /// suppress spurious level shifts.
    pub lambda1: f64,
    /// Second-difference penalty of the trend objective. Larger values
    /// straighten the trend between shifts.
    pub lambda2: f64,
    /// Periods consulted on each side during seasonal extraction.
    pub seasonal_neighbors: usize,
    /// Phase-offset scale of the seasonal kernel.
    pub seasonal_sigma_d: f64,
    /// Value scale of the seasonal kernel; `None` adapts to same-phase
    /// differences.
    pub seasonal_sigma_i: Option<f64>,
    /// Alternating passes between trend and seasonal extraction.
    pub max_iterations: usize,
    /// Largest per-point component change that still counts as converged.
    pub tolerance: f64,
    /// Trend solver parameters.
    pub solver: SolverConfig,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            half_window: 2,
            sigma_d: 1.0,
            sigma_i: None,
            lambda1: 1.0,
            lambda2: 10.0,
            seasonal_neighbors: 2,
            seasonal_sigma_d: 0.5,
            seasonal_sigma_i: None,
            max_iterations: 5,
            tolerance: 1e-3,
            solver: SolverConfig::default(),
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_d.is_finite() && self.sigma_d > 0.0)
            || !(self.seasonal_sigma_d.is_finite() && self.seasonal_sigma_d > 0.0)
        {
            return Err(Error::validation("kernel distance scales must be positive"));
        }
        for sigma in [self.sigma_i, self.seasonal_sigma_i].into_iter().flatten() {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::validation("kernel value scales must be positive"));
            }
        }
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0)
            || !(self.lambda2.is_finite() && self.lambda2 >= 0.0)
        {
            return Err(Error::validation("penalty weights must be non-negative"));
        }
        if self.seasonal_neighbors == 0 {
            return Err(Error::validation(
                "seasonal extraction needs at least one neighboring period",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("need at least one alternating pass"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::validation("tolerance must be positive"));
        }
        self.solver.validate()
    }
}

/// Additive decomposition `input = trend + seasonal + remainder`, exact by
/// construction: the remainder is computed as the input minus the other two.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// Sums the components back into the input.
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.trend[i] + self.seasonal[i] + self.remainder[i])
            .collect()
    }
}

/// Denoises with the bilateral filter, resolving the adaptive value scale.
pub fn bilateral_denoise(values: &[f64], config: &DecomposeConfig) -> Vec<f64> {
    let sigma_i = config
        .sigma_i
        .unwrap_or_else(|| adaptive_value_sigma(values));
    bilateral_filter(values, config.half_window, config.sigma_d, sigma_i)
}

/// Extracts the robust trend of a series with the configured penalties.
/// Returns the fit carrying the achieved objective and iteration count.
pub fn extract_trend(values: &[f64], config: &DecomposeConfig) -> Result<TrendFit> {
    let solver = TrendSolver::new(values.len(), config.lambda1, config.lambda2, config.solver)?;
    solver.solve(values, None)
}

/// Moves per-period seasonal means into the trend and recomputes the
/// remainder against the original input. After adjustment the seasonal
/// component averages to zero over every complete period.
pub fn adjust(
    mut trend: Vec<f64>,
    mut seasonal: Vec<f64>,
    input: &[f64],
    period: usize,
) -> Decomposition {
    if period >= 2 {
        let full_blocks = input.len() / period;
        for block in 0..full_blocks {
            let range = block * period..(block + 1) * period;
            let mean = seasonal[range.clone()].iter().sum::<f64>() / period as f64;
            for i in range {
                seasonal[i] -= mean;
                trend[i] += mean;
            }
        }
    }
    let remainder = (0..input.len())
        .map(|i| input[i] - trend[i] - seasonal[i])
        .collect();
    Decomposition {
        trend,
        seasonal,
        remainder,
    }
}

/// Decomposition for aperiodic series: denoise, extract the trend, and leave
/// the seasonal component at zero.
pub fn robust_trend_filter(values: &[f64], config: &DecomposeConfig) -> Result<Decomposition> {
    decompose_with_period(values, PeriodEstimate::NonPeriodic, config)
}

/// Decomposes a series, detecting periodicity first.
pub fn decompose(series: &TimeSeries, config: &DecomposeConfig) -> Result<Decomposition> {
    decompose_values(series.values(), config)
}

/// Decomposes raw values, detecting periodicity first.
pub fn decompose_values(values: &[f64], config: &DecomposeConfig) -> Result<Decomposition> {
    decompose_with_period(values, detect_period(values), config)
}

/// Decomposes raw values under an explicit periodicity verdict. This is the
/// primitive behind both the gate and the streaming re-solves, and the hook
/// for callers that need to pin or disable the seasonal path.
pub fn decompose_with_period(
    values: &[f64],
    period: PeriodEstimate,
    config: &DecomposeConfig,
) -> Result<Decomposition> {
    config.validate()?;
    let n = values.len();
    if n < 3 {
        return Err(Error::validation(format!(
            "decomposition needs at least 3 points, got {n}"
        )));
    }

    let denoised = bilateral_denoise(values, config);
    let solver = TrendSolver::new(n, config.lambda1, config.lambda2, config.solver)?;

    let period = match period {
        PeriodEstimate::Periodic { period } if period >= 2 && n >= 2 * period => period,
        _ => {
            let fit = solver.solve(&denoised, None)?;
            return Ok(adjust(fit.trend, vec![0.0; n], values, 0));
        }
    };

    // Alternating refinement, warm-starting each trend solve from the last.
    let mut seasonal = seasonal::phase_median_profile(&denoised, period);
    let deseasonalized: Vec<f64> = (0..n).map(|i| denoised[i] - seasonal[i]).collect();
    let mut fit = solver.solve(&deseasonalized, None)?;

    for _ in 0..config.max_iterations {
        let detrended: Vec<f64> = (0..n).map(|i| denoised[i] - fit.trend[i]).collect();
        let new_seasonal = extract_seasonal(&detrended, period, config)?;
        let deseasonalized: Vec<f64> = (0..n).map(|i| denoised[i] - new_seasonal[i]).collect();
        let new_fit = solver.solve(&deseasonalized, Some(&fit))?;

        let delta = (0..n).fold(0.0f64, |m, i| {
            m.max((new_fit.trend[i] - fit.trend[i]).abs())
                .max((new_seasonal[i] - seasonal[i]).abs())
        });
        seasonal = new_seasonal;
        fit = new_fit;
        if delta <= config.tolerance {
            break;
        }
    }

    Ok(adjust(fit.trend, seasonal, values, period))
}

/// Writes `timestamp,input,trend,seasonal,remainder` rows with full float
/// precision.
pub fn write_decomposition_csv(
    writer: &mut impl Write,
    timestamps: &[i64],
    input: &[f64],
    decomposition: &Decomposition,
) -> Result<()> {
    if timestamps.len() != decomposition.len() || input.len() != decomposition.len() {
        return Err(Error::validation(
            "decomposition export requires aligned timestamps, input, and components",
        ));
    }
    writeln!(writer, "timestamp,input,trend,seasonal,remainder")?;
    for i in 0..decomposition.len() {
        writeln!(
            writer,
            "{},{},{},{},{}",
            timestamps[i],
            input[i],
            decomposition.trend[i],
            decomposition.seasonal[i],
            decomposition.remainder[i]
        )?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn reconstruction_is_exact_and_seasonal_means_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 360;
        let period = 24;
        let values: Vec<f64> = (0..n)
            .map(|t| {
                let tf = t as f64;
                3.0 * (TAU * tf / period as f64).sin()
                    + 0.01 * tf
                    + (rng.random::<f64>() - 0.5) * 0.2
            })
            .collect();
        let d = decompose_values(&values, &DecomposeConfig::default()).unwrap();

        for (i, (x, r)) in values.iter().zip(d.reconstruct()).enumerate() {
            assert!((x - r).abs() <= 1e-9, "index {i}: {x} vs {r}");
        }
        for block in 0..n / period {
            let mean: f64 =
                d.seasonal[block * period..(block + 1) * period].iter().sum::<f64>()
                    / period as f64;
            assert!(mean.abs() <= 1e-9, "block {block} mean {mean}");
        }
    }

    #[test]
    fn recovers_trend_and_seasonal_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 480;
        let period = 24;
        let true_trend: Vec<f64> = (0..n).map(|t| 1.0 + 0.005 * t as f64).collect();
        let true_seasonal: Vec<f64> =
            (0..n).map(|t| 2.0 * (TAU * t as f64 / period as f64).sin()).collect();
        let values: Vec<f64> = (0..n)
            .map(|t| true_trend[t] + true_seasonal[t] + (rng.random::<f64>() - 0.5) * 0.1)
            .collect();

        let d = decompose_values(&values, &DecomposeConfig::default()).unwrap();
        assert!(rmse(&d.trend, &true_trend) < 0.15, "trend rmse {}", rmse(&d.trend, &true_trend));
        assert!(
            rmse(&d.seasonal, &true_seasonal) < 0.15,
            "seasonal rmse {}",
            rmse(&d.seasonal, &true_seasonal)
        );
    }

    #[test]
    fn spikes_land_in_the_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 240;
        let period = 12;
        let mut values: Vec<f64> = (0..n)
            .map(|t| (TAU * t as f64 / period as f64).sin() + (rng.random::<f64>() - 0.5) * 0.1)
            .collect();
        values[100] += 5.0;
        let d = decompose_values(&values, &DecomposeConfig::default()).unwrap();
        assert!(
            d.remainder[100] > 3.5,
            "spike did not reach the remainder: {}",
            d.remainder[100]
        );
        // Neighboring remainder stays quiet: the spike was not smeared.
        assert!(d.remainder[98].abs() < 0.5, "{}", d.remainder[98]);
        assert!(d.remainder[102].abs() < 0.5, "{}", d.remainder[102]);
    }

    #[test]
    fn ramp_stays_in_trend_for_aperiodic_input() {
        let values: Vec<f64> = (0..120).map(|t| 0.25 * t as f64 - 4.0).collect();
        let d = robust_trend_filter(&values, &DecomposeConfig::default()).unwrap();
        assert!(d.seasonal.iter().all(|&s| s == 0.0));
        for (i, r) in d.remainder.iter().enumerate() {
            assert!(r.abs() < 1e-3, "index {i}: remainder {r}");
        }
    }

    #[test]
    fn level_shift_moves_the_trend_not_the_seasonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 360;
        let period = 24;
        let values: Vec<f64> = (0..n)
            .map(|t| {
                2.0 * (TAU * t as f64 / period as f64).sin()
                    + if t >= 180 { 4.0 } else { 0.0 }
                    + (rng.random::<f64>() - 0.5) * 0.1
            })
            .collect();
        let d = decompose_values(&values, &DecomposeConfig::default()).unwrap();
        let before: f64 = d.trend[120..168].iter().sum::<f64>() / 48.0;
        let after: f64 = d.trend[216..264].iter().sum::<f64>() / 48.0;
        assert!(
            (after - before - 4.0).abs() < 0.5,
            "trend shift {} instead of 4.0",
            after - before
        );
        let seasonal_peak = d.seasonal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!(seasonal_peak < 3.0, "seasonal blew up: {seasonal_peak}");
    }

    #[test]
    fn aperiodic_gate_yields_zero_seasonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        let d = decompose_values(&values, &DecomposeConfig::default()).unwrap();
        assert!(d.seasonal.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn solver_failure_propagates() {
        let mut config = DecomposeConfig::default();
        config.solver.max_iterations = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 10.0).collect();
        assert!(matches!(
            decompose_values(&values, &config),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn csv_export_has_aligned_columns() {
        let values = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d = robust_trend_filter(&values, &DecomposeConfig::default()).unwrap();
        let timestamps: Vec<i64> = (0..6).collect();
        let mut buf = Vec::new();
        write_decomposition_csv(&mut buf, &timestamps, &values, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "timestamp,input,trend,seasonal,remainder");
        assert_eq!(lines.len(), 7);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 5);
        }
    }
}
