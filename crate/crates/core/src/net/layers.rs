//! Layer primitives with explicit forward and backward passes.
//!
//! Activations are flat channel-major buffers: element `(c, t)` of a feature
//! map with width `w` lives at index `c * w + t`. Every backward function is
//! the exact adjoint of its forward, which the finite-difference tests
//! verify end to end through the assembled network.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A 1-D convolution with stride 1 and zero "same" padding, so the output
/// width equals the input width. The kernel width must be odd.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Layout `[out][in][tap]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// He initialization: zero-mean Gaussian weights scaled to preserve
    /// activation variance under ReLU, zero biases.
    pub fn init(&mut self, rng: &mut impl Rng) {
        let fan_in = (self.in_channels * self.kernel) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite scale");
        for w in &mut self.weight {
            *w = normal.sample(rng);
        }
        self.bias.fill(0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[f64], width: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_channels * width);
        let pad = self.kernel / 2;
        let mut out = vec![0.0; self.out_channels * width];
        for o in 0..self.out_channels {
            let out_row = &mut out[o * width..(o + 1) * width];
            out_row.fill(self.bias[o]);
            for c in 0..self.in_channels {
                let in_row = &input[c * width..(c + 1) * width];
                let w_base = (o * self.in_channels + c) * self.kernel;
                for j in 0..self.kernel {
                    // t + j - pad in range  <=>  t in [pad - j, width - 1 + pad - j]
                    let Some((t_lo, t_hi)) = tap_range(width, pad, j) else {
                        continue;
                    };
                    let w = self.weight[w_base + j];
                    if w == 0.0 {
                        continue;
                    }
                    for t in t_lo..=t_hi {
                        out_row[t] += w * in_row[t + j - pad];
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `g_weight`/`g_bias` and returns
    /// the gradient with respect to the input.
    pub fn backward(
        &self,
        input: &[f64],
        width: usize,
        g_out: &[f64],
        g_weight: &mut [f64],
        g_bias: &mut [f64],
    ) -> Vec<f64> {
        debug_assert_eq!(g_out.len(), self.out_channels * width);
        let pad = self.kernel / 2;
        let mut g_in = vec![0.0; self.in_channels * width];
        for o in 0..self.out_channels {
            let g_row = &g_out[o * width..(o + 1) * width];
            g_bias[o] += g_row.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let in_row = &input[c * width..(c + 1) * width];
                let g_in_row = &mut g_in[c * width..(c + 1) * width];
                let w_base = (o * self.in_channels + c) * self.kernel;
                for j in 0..self.kernel {
                    let Some((t_lo, t_hi)) = tap_range(width, pad, j) else {
                        continue;
                    };
                    let mut gw = 0.0;
                    let w = self.weight[w_base + j];
                    for t in t_lo..=t_hi {
                        let s = t + j - pad;
                        gw += g_row[t] * in_row[s];
                        g_in_row[s] += w * g_row[t];
                    }
                    g_weight[w_base + j] += gw;
                }
            }
        }
        g_in
    }
}

/// Output positions `t` for which input tap `t + j - pad` is in range, or
/// `None` when the tap never lands inside (possible when the feature map is
/// narrower than the kernel).
fn tap_range(width: usize, pad: usize, j: usize) -> Option<(usize, usize)> {
    let t_lo = pad.saturating_sub(j);
    if j + 1 > width + pad {
        return None;
    }
    let t_hi = (width + pad - j - 1).min(width - 1);
    if t_lo > t_hi {
        return None;
    }
    Some((t_lo, t_hi))
}

pub(crate) fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Backward through ReLU given the post-activation values: the gradient
/// passes only where the activation stayed positive.
pub(crate) fn relu_backward_inplace(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max pooling with width 2. Returns the pooled map and, per output element,
/// the offset (0 or 1) of the winning input; the first element wins ties so
/// the subgradient choice is deterministic.
pub(crate) fn maxpool2(input: &[f64], channels: usize, width: usize) -> (Vec<f64>, Vec<u8>) {
    debug_assert_eq!(width % 2, 0);
    let half = width / 2;
    let mut out = vec![0.0; channels * half];
    let mut arg = vec![0u8; channels * half];
    for c in 0..channels {
        for i in 0..half {
            let a = input[c * width + 2 * i];
            let b = input[c * width + 2 * i + 1];
            if a >= b {
                out[c * half + i] = a;
                arg[c * half + i] = 0;
            } else {
                out[c * half + i] = b;
                arg[c * half + i] = 1;
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(
    g_out: &[f64],
    arg: &[u8],
    channels: usize,
    out_width: usize,
) -> Vec<f64> {
    let width = out_width * 2;
    let mut g_in = vec![0.0; channels * width];
    for c in 0..channels {
        for i in 0..out_width {
            let idx = c * out_width + i;
            g_in[c * width + 2 * i + arg[idx] as usize] = g_out[idx];
        }
    }
    g_in
}

/// Nearest-neighbor upsampling by 2: each input element is repeated twice.
pub(crate) fn upsample2(input: &[f64], channels: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; channels * width * 2];
    for c in 0..channels {
        for t in 0..width {
            let v = input[c * width + t];
            out[c * width * 2 + 2 * t] = v;
            out[c * width * 2 + 2 * t + 1] = v;
        }
    }
    out
}

pub(crate) fn upsample2_backward(g_out: &[f64], channels: usize, in_width: usize) -> Vec<f64> {
    let out_width = in_width * 2;
    let mut g_in = vec![0.0; channels * in_width];
    for c in 0..channels {
        for t in 0..in_width {
            g_in[c * in_width + t] =
                g_out[c * out_width + 2 * t] + g_out[c * out_width + 2 * t + 1];
        }
    }
    g_in
}

/// Channel concatenation `[a; b]` at equal widths.
pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

pub(crate) fn sigmoid_inplace(v: &mut [f64]) {
    for x in v {
        *x = 1.0 / (1.0 + (-*x).exp());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_forward_matches_direct_convolution() {
        let mut conv = Conv1d::new(2, 1, 3);
        conv.weight = vec![1.0, 2.0, 3.0, -1.0, 0.5, 1.5];
        conv.bias = vec![0.25];
        let width = 5;
        let input: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let out = conv.forward(&input, width);
        for t in 0..width {
            let mut expected = 0.25;
            for c in 0..2 {
                for j in 0..3 {
                    let s = t as i64 + j as i64 - 1;
                    if s >= 0 && (s as usize) < width {
                        expected += conv.weight[c * 3 + j] * input[c * width + s as usize];
                    }
                }
            }
            assert!((out[t] - expected).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let width = 7;
        let mut conv = Conv1d::new(2, 3, 3);
        conv.init(&mut rng);
        let input: Vec<f64> = (0..2 * width).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        // Scalar objective: sum of squared outputs / 2, so dL/dout = out.
        let out = conv.forward(&input, width);
        let mut g_w = vec![0.0; conv.weight.len()];
        let mut g_b = vec![0.0; conv.bias.len()];
        let g_in = conv.backward(&input, width, &out, &mut g_w, &mut g_b);

        let loss = |c: &Conv1d, inp: &[f64]| -> f64 {
            c.forward(inp, width).iter().map(|v| v * v).sum::<f64>() / 2.0
        };
        let h = 1e-6;
        for i in 0..conv.weight.len() {
            let mut plus = conv.clone();
            plus.weight[i] += h;
            let mut minus = conv.clone();
            minus.weight[i] -= h;
            let fd = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * h);
            assert!((fd - g_w[i]).abs() < 1e-5, "weight {i}: {fd} vs {}", g_w[i]);
        }
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h;
            let mut minus = input.clone();
            minus[i] -= h;
            let fd = (loss(&conv, &plus) - loss(&conv, &minus)) / (2.0 * h);
            assert!((fd - g_in[i]).abs() < 1e-5, "input {i}: {fd} vs {}", g_in[i]);
        }
    }

    #[test]
    fn conv_handles_maps_narrower_than_the_kernel() {
        let mut conv = Conv1d::new(1, 1, 5);
        conv.weight = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        conv.bias = vec![0.0];
        // Width 1: only the center tap ever lands in range.
        let out = conv.forward(&[2.0], 1);
        assert_eq!(out, vec![6.0]);
        let mut g_w = vec![0.0; 5];
        let mut g_b = vec![0.0; 1];
        let g_in = conv.backward(&[2.0], 1, &[1.0], &mut g_w, &mut g_b);
        assert_eq!(g_in, vec![3.0]);
        assert_eq!(g_w, vec![0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(g_b, vec![1.0]);
    }

    #[test]
    fn maxpool_takes_the_first_element_on_ties() {
        let input = vec![1.0, 1.0, 3.0, 2.0, -5.0, -4.0];
        let (out, arg) = maxpool2(&input, 1, 6);
        assert_eq!(out, vec![1.0, 3.0, -4.0]);
        assert_eq!(arg, vec![0, 0, 1]);
        let g_in = maxpool2_backward(&[1.0, 2.0, 3.0], &arg, 1, 3);
        assert_eq!(g_in, vec![1.0, 0.0, 2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let input = vec![1.0, 2.0, 3.0, 4.0];
        let up = upsample2(&input, 2, 2);
        assert_eq!(up, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let g = upsample2_backward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 2, 2);
        assert_eq!(g, vec![3.0, 7.0, 11.0, 15.0]);
    }
}
