//! Shared fixtures for the benchmark targets.

/// Deterministic integer hash used to synthesize noise without an RNG
/// dependency in the library target.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform noise in [-0.5, 0.5) derived from the index.
fn noise(index: u64, salt: u64) -> f64 {
    (mix(index ^ salt) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Drifting seasonal series with noise and occasional spikes: the shape the
/// pipeline is built for.
pub fn seasonal_series(len: usize, period: usize) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let phase = (t % period) as f64 / period as f64;
            let spike = if t % 97 == 43 { 4.0 } else { 0.0 };
            0.001 * t as f64
                + (phase * std::f64::consts::TAU).sin()
                + 0.1 * noise(t as u64, 0xabcd)
                + spike
        })
        .collect()
}

/// Standard-normal-ish values for window inputs, deterministic per index.
pub fn window_values(len: usize) -> Vec<f64> {
    (0..len).map(|t| 2.0 * noise(t as u64, 0x5eed)).collect()
}
