//! Bilateral denoising: a Gaussian moving average whose weights also decay
//! with value distance, so noise is averaged out while level shifts and
//! spikes keep their edges instead of being smeared.

use crate::stats;

/// Smallest usable value scale; keeps weights finite when the input is
/// noise-free and the adaptive scale collapses to zero.
const MIN_SIGMA_I: f64 = 1e-12;

/// Adaptive value scale for the bilateral kernel: the robust noise estimate
/// `1.4826 * MAD` of the first differences.
pub fn adaptive_value_sigma(values: &[f64]) -> f64 {
    stats::first_difference_sigma(values).max(MIN_SIGMA_I)
}

/// Filters each point over the window `[t - h, t + h]`, truncated at the
/// series boundaries, with weights
/// `exp(-(t-j)^2 / (2 sigma_d^2)) * exp(-(x_t-x_j)^2 / (2 sigma_i^2))`
/// renormalized to sum to one.
pub fn bilateral_filter(values: &[f64], h: usize, sigma_d: f64, sigma_i: f64) -> Vec<f64> {
    let n = values.len();
    let sigma_i = sigma_i.max(MIN_SIGMA_I);
    let inv_2d = 1.0 / (2.0 * sigma_d * sigma_d);
    let inv_2i = 1.0 / (2.0 * sigma_i * sigma_i);

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let lo = t.saturating_sub(h);
        let hi = (t + h).min(n.saturating_sub(1));
        let mut num = 0.0;
        let mut den = 0.0;
        for j in lo..=hi {
            let dt = t as f64 - j as f64;
            let dv = values[t] - values[j];
            let w = (-dt * dt * inv_2d).exp() * (-dv * dv * inv_2i).exp();
            num += w * values[j];
            den += w;
        }
        // The self weight is always 1, so the denominator cannot vanish.
        out.push(num / den);
    }
    out
}
