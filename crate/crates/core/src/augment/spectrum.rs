//! Half-spectrum representation of a real series.
//!
//! The forward transform stores `ceil((N + 1) / 2)` amplitude/phase pairs
//! with the `1/N` normalization on the analysis side. The inverse rebuilds
//! the full spectrum by conjugate symmetry, so its output is real by
//! construction no matter how the stored bins were edited; the DC bin (and
//! the Nyquist bin for even lengths) contributes only its real part.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Amplitude and phase of the non-redundant half of a real series' DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub(crate) amplitude: Vec<f64>,
    pub(crate) phase: Vec<f64>,
    pub(crate) original_length: usize,
}

impl Spectrum {
    /// Half-spectrum bin count for a series of length `n`.
    pub fn bins_for(n: usize) -> usize {
        (n + 1).div_ceil(2).max(1)
    }

    pub fn new(amplitude: Vec<f64>, phase: Vec<f64>, original_length: usize) -> Result<Self> {
        let expected = Self::bins_for(original_length);
        if original_length == 0 {
            return Err(Error::validation("spectrum of an empty series"));
        }
        if amplitude.len() != expected || phase.len() != expected {
            return Err(Error::validation(format!(
                "expected {expected} bins for length {original_length}, got {} amplitudes and {} phases",
                amplitude.len(),
                phase.len()
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::validation("amplitudes must be finite and non-negative"));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("phases must be finite"));
        }
        Ok(Spectrum {
            amplitude,
            phase,
            original_length,
        })
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn bins(&self) -> usize {
        self.amplitude.len()
    }

    /// True if `bin` must stay real for the series to stay real: the DC bin,
    /// and the Nyquist bin when the length is even.
    pub fn is_real_bin(&self, bin: usize) -> bool {
        bin == 0 || (self.original_length % 2 == 0 && bin == self.original_length / 2)
    }
}

/// Forward transform to the half spectrum, with coefficients `(1/N) * sum_t
/// x_t exp(-2 pi i k t / N)`.
pub fn dft(values: &[f64]) -> Result<Spectrum> {
    let n = values.len();
    if n == 0 {
        return Err(Error::validation("cannot transform an empty series"));
    }
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = Spectrum::bins_for(n);
    let scale = 1.0 / n as f64;
    let mut amplitude = Vec::with_capacity(bins);
    let mut phase = Vec::with_capacity(bins);
    for c in &buf[..bins] {
        let c = c * scale;
        amplitude.push(c.norm());
        phase.push(c.im.atan2(c.re));
    }
    Spectrum::new(amplitude, phase, n)
}

/// Inverse transform: expands the half spectrum by conjugate symmetry and
/// sums the exponentials. The output length equals the original length.
pub fn idft(spectrum: &Spectrum) -> Vec<f64> {
    let n = spectrum.original_length;
    let bins = spectrum.bins();
    let mut full = vec![Complex::new(0.0, 0.0); n];
    for k in 0..bins {
        let a = spectrum.amplitude[k];
        let theta = spectrum.phase[k];
        let c = if spectrum.is_real_bin(k) {
            Complex::new(a * theta.cos(), 0.0)
        } else {
            Complex::from_polar(a, theta)
        };
        full[k] = c;
        if k > 0 && n - k > k {
            full[n - k] = c.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut full);
    full.iter().map(|c| c.re).collect()
}
