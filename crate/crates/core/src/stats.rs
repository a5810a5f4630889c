//! Robust location and scale estimators shared across modules.

/// Consistency factor making the MAD estimate the standard deviation for
/// Gaussian data.
pub(crate) const MAD_TO_SIGMA: f64 = 1.4826;

/// Median by selection; the average of the two middle order statistics for
/// even lengths. Returns 0 for an empty slice.
pub(crate) fn median(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut scratch = values.to_vec();
    let mid = n / 2;
    let (left, upper, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median absolute deviation from the median.
pub(crate) fn mad(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = median(values);
    let deviations: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&deviations)
}

/// Robust standard-deviation estimate `1.4826 * MAD`.
pub(crate) fn robust_sigma(values: &[f64]) -> f64 {
    MAD_TO_SIGMA * mad(values)
}

/// Robust noise scale of a series: `1.4826 * MAD` of its first differences.
/// Differencing removes trend and slow seasonality, leaving noise.
pub(crate) fn first_difference_sigma(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    robust_sigma(&diffs)
}
