//! Periodicity detection: a periodogram peak proposes a candidate period and
//! the autocorrelation at that lag must confirm it. The periodogram alone
//! over-triggers on noise (its maximum is an extreme order statistic) and the
//! autocorrelation alone proposes no candidate, so the two are combined.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::stats;

/// Outcome of periodicity detection. A detected period is always in
/// `[2, n / 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodEstimate {
    NonPeriodic,
    Periodic { period: usize },
}

impl PeriodEstimate {
    pub fn is_periodic(&self) -> bool {
        matches!(self, PeriodEstimate::Periodic { .. })
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            PeriodEstimate::NonPeriodic => None,
            PeriodEstimate::Periodic { period } => Some(*period),
        }
    }
}

/// Periodogram peak factor: the winning bin must carry at least this multiple
/// of the median candidate power.
const PEAK_TO_MEDIAN: f64 = 3.0;

/// Minimum autocorrelation at the candidate lag.
const MIN_ACF: f64 = 0.5;

/// Detects a dominant period, or decides the series is aperiodic.
///
/// Series shorter than 8 points and constant series are aperiodic by
/// definition. The series is detrended with a wide running median before
/// analysis so slow drift and level shifts do not mask or fake periodicity.
pub fn detect_period(values: &[f64]) -> PeriodEstimate {
    let n = values.len();
    if n < 8 {
        return PeriodEstimate::NonPeriodic;
    }
    let spread = values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(spread.is_finite() && spread > 0.0) {
        return PeriodEstimate::NonPeriodic;
    }

    let detrended = subtract_running_median(values);

    // Periodogram over frequency bins whose implied period lies in [2, n/2].
    let power = periodogram(&detrended);
    let k_lo = 2;
    let k_hi = n / 2;
    if k_lo > k_hi {
        return PeriodEstimate::NonPeriodic;
    }
    let candidates = &power[k_lo..=k_hi];
    let (best_offset, best_power) = candidates
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) });
    let median_power = stats::median(candidates);
    if best_power <= 0.0 || best_power < PEAK_TO_MEDIAN * median_power {
        return PeriodEstimate::NonPeriodic;
    }
    let k_star = k_lo + best_offset;
    let proposed = ((n as f64) / (k_star as f64)).round() as usize;

    // Confirmation: the autocorrelation must have a strong local maximum near
    // the proposed lag. This also refines off-grid periods to the nearest
    // integer lag.
    let acf = autocorrelation(&detrended, (n / 2).min(proposed + proposed.div_ceil(10) + 2));
    let delta = (proposed / 10).max(2);
    let lo = proposed.saturating_sub(delta).max(2);
    let hi = (proposed + delta).min(n / 2).min(acf.len().saturating_sub(1));
    if lo > hi {
        return PeriodEstimate::NonPeriodic;
    }
    let mut best_lag = lo;
    for lag in lo..=hi {
        if acf[lag] > acf[best_lag] {
            best_lag = lag;
        }
    }
    let rho = acf[best_lag];
    let left = if best_lag >= 1 { acf[best_lag - 1] } else { f64::NEG_INFINITY };
    let right = if best_lag + 1 < acf.len() { acf[best_lag + 1] } else { f64::NEG_INFINITY };
    if rho < MIN_ACF || rho < left || rho < right {
        return PeriodEstimate::NonPeriodic;
    }
    PeriodEstimate::Periodic { period: best_lag }
}

/// Removes drift and level shifts while preserving oscillations much shorter
/// than the window. The window is wide (n/8, at least 9) so seasonal cycles
/// pass through to the residual.
fn subtract_running_median(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut width = (n / 8).max(9);
    if width % 2 == 0 {
        width += 1;
    }
    let half = width / 2;
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<f64> = Vec::with_capacity(width);
    for t in 0..n {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n - 1);
        scratch.clear();
        scratch.extend_from_slice(&values[lo..=hi]);
        let mid = scratch.len() / 2;
        let (_, m, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
        out.push(values[t] - *m);
    }
    out
}

/// Squared DFT magnitudes, indexed by frequency bin.
fn periodogram(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Biased autocorrelation estimates for lags `0..=max_lag` of a zero-centered
/// series.
fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return vec![0.0; max_lag + 1];
    }
    (0..=max_lag.min(n - 1))
        .map(|lag| {
            let num: f64 = (0..n - lag).map(|t| centered[t] * centered[t + lag]).sum();
            num / denom
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detects_a_clean_sinusoid() {
        let values: Vec<f64> = (0..480)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin())
            .collect();
        assert_eq!(detect_period(&values), PeriodEstimate::Periodic { period: 24 });
    }

    #[test]
    fn detects_a_short_period() {
        let values: Vec<f64> = (0..100)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 5.0).cos() * 3.0)
            .collect();
        assert_eq!(detect_period(&values), PeriodEstimate::Periodic { period: 5 });
    }

    #[test]
    fn survives_trend_and_level_shift() {
        let values: Vec<f64> = (0..480)
            .map(|t| {
                let tf = t as f64;
                (2.0 * std::f64::consts::PI * tf / 24.0).sin() * 2.0
                    + 0.01 * tf
                    + if t >= 240 { 3.0 } else { 0.0 }
            })
            .collect();
        assert_eq!(detect_period(&values), PeriodEstimate::Periodic { period: 24 });
    }

    #[test]
    fn white_noise_is_aperiodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let values: Vec<f64> = (0..512).map(|_| rng.random::<f64>() - 0.5).collect();
            assert_eq!(detect_period(&values), PeriodEstimate::NonPeriodic);
        }
    }

    #[test]
    fn constants_and_short_series_are_aperiodic() {
        assert_eq!(detect_period(&[1.0; 100]), PeriodEstimate::NonPeriodic);
        assert_eq!(detect_period(&[1.0, 2.0, 1.0, 2.0]), PeriodEstimate::NonPeriodic);
    }

    #[test]
    fn a_line_is_aperiodic() {
        let values: Vec<f64> = (0..200).map(|t| 0.3 * t as f64).collect();
        assert_eq!(detect_period(&values), PeriodEstimate::NonPeriodic);
    }
}
