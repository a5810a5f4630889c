//! Seasonal extraction: each point's seasonal level is a bilateral average
//! of same-phase points in neighboring periods. The point itself is never a
//! candidate, so an anomalous value is pulled toward its phase's normal level
//! and the deviation survives into the remainder.

use crate::decompose::DecomposeConfig;
use crate::stats;
use crate::{Error, Result};

/// Widens the adaptive value kernel past the raw same-phase noise scale:
/// noise-level differences between candidates should weigh nearly alike
/// (otherwise the average is pulled toward the point's own noise), while
/// genuine anomalies many sigma out still get crushed.
const ADAPTIVE_SIGMA_I_FACTOR: f64 = 2.0;

/// Estimates the seasonal component of a detrended series with period
/// `period`.
///
/// Candidates for point `t` are `t + k * period + delta` for
/// `k in [-K_s, K_s] \ {0}` and `delta in [-H, H]`, intersected with the
/// series. Weights combine a phase-offset kernel over `delta` and a value
/// kernel over `x_t - x_j`; they are renormalized per point, so a point whose
/// candidates are all far away in value still averages them uniformly instead
/// of keeping its own (possibly anomalous) value.
pub fn extract_seasonal(
    detrended: &[f64],
    period: usize,
    config: &DecomposeConfig,
) -> Result<Vec<f64>> {
    let n = detrended.len();
    if period < 2 {
        return Err(Error::validation(format!(
            "seasonal extraction needs period >= 2, got {period}"
        )));
    }
    if n < 2 * period {
        return Err(Error::validation(format!(
            "series length {n} too short for period {period}; need at least {}",
            2 * period
        )));
    }

    let h = config.half_window as i64;
    let k_s = config.seasonal_neighbors as i64;
    let sigma_d = config.seasonal_sigma_d;
    let sigma_i = config
        .seasonal_sigma_i
        .unwrap_or_else(|| ADAPTIVE_SIGMA_I_FACTOR * same_phase_sigma(detrended, period))
        .max(1e-12);
    let inv_2d = 1.0 / (2.0 * sigma_d * sigma_d);
    let inv_2i = 1.0 / (2.0 * sigma_i * sigma_i);

    let mut out = Vec::with_capacity(n);
    let mut exponents: Vec<(f64, f64)> = Vec::new();
    for t in 0..n {
        exponents.clear();
        let mut max_exp = f64::NEG_INFINITY;
        for k in -k_s..=k_s {
            if k == 0 {
                continue;
            }
            for delta in -h..=h {
                let j = t as i64 + k * period as i64 + delta;
                if j < 0 || j >= n as i64 {
                    continue;
                }
                let dv = detrended[t] - detrended[j as usize];
                let e = -(delta * delta) as f64 * inv_2d - dv * dv * inv_2i;
                max_exp = max_exp.max(e);
                exponents.push((e, detrended[j as usize]));
            }
        }
        // n >= 2 * period guarantees at least one candidate for every point.
        // Shifting by the largest exponent keeps the normalization away from
        // 0/0 even when every candidate is distant in value.
        let mut num = 0.0;
        let mut den = 0.0;
        for &(e, v) in &exponents {
            let w = (e - max_exp).exp();
            num += w * v;
            den += w;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Robust scale of same-phase differences one period apart: noise without
/// the seasonal slope that contaminates adjacent-point differences.
fn same_phase_sigma(values: &[f64], period: usize) -> f64 {
    let diffs: Vec<f64> = (0..values.len() - period)
        .map(|t| values[t + period] - values[t])
        .collect();
    stats::robust_sigma(&diffs)
}

/// Per-phase medians replicated across the series and centered to zero mean:
/// the starting seasonal estimate for the alternating decomposition.
pub(crate) fn phase_median_profile(values: &[f64], period: usize) -> Vec<f64> {
    let n = values.len();
    let mut profile = Vec::with_capacity(period);
    let mut bucket = Vec::new();
    for phase in 0..period {
        bucket.clear();
        let mut t = phase;
        while t < n {
            bucket.push(values[t]);
            t += period;
        }
        profile.push(stats::median(&bucket));
    }
    let mean = profile.iter().sum::<f64>() / period as f64;
    (0..n).map(|t| profile[t % period] - mean).collect()
}
