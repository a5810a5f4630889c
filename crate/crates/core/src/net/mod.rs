//! A small 1-D fully convolutional encoder-decoder for per-point anomaly
//! scoring, written from scratch: forward, backward, and the optimizer are
//! explicit so every gradient can be checked against finite differences.
//!
//! Architecture: `depth` encoder stages (conv, ReLU, max-pool 2) double the
//! channel count while halving the width; the decoder mirrors them with
//! nearest-neighbor upsampling and channel concatenation of the matching
//! encoder activation; a kernel-1 convolution and a logistic map produce one
//! probability per input position. Skip connections let the head combine
//! point-level detail with pooled context, which is what separates an
//! isolated spike from the edge of a level shift.
//!
//! Training minimizes a doubly weighted cross entropy: a class weight
//! compensates label imbalance and a per-point value weight emphasizes
//! points that deviate from their window's robust center.

mod layers;

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use layers::{
    concat, maxpool2, maxpool2_backward, relu_backward_inplace, relu_inplace, sigmoid_inplace,
    upsample2, upsample2_backward, Conv1d,
};

use crate::stats;
use crate::{Error, Result};

/// What the input channel carries. The network itself is agnostic; the
/// pipeline uses this to prepare windows consistently at training and
/// scoring time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Decomposition remainder windows: the intended operating mode.
    Remainder,
    /// Raw value windows, bypassing decomposition.
    Raw,
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input_mode: InputMode,
    pub input_channels: usize,
    /// Encoder/decoder stages; each halves, then doubles, the width.
    pub depth: usize,
    /// Channels of the first stage; stage `i` has `base_channels << i`.
    pub base_channels: usize,
    /// Odd convolution kernel width.
    pub kernel_size: usize,
    /// Input window width; must be divisible by `2^depth`.
    pub window: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Extra loss weight for anomalous points. `None` lets dataset
    /// preparation derive it from the observed class imbalance.
    pub label_weight: Option<f64>,
    /// Exponent of the value-weight deviation term.
    pub weight_gamma: f64,
    /// Scale of the value-weight deviation term.
    pub weight_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_mode: InputMode::Remainder,
            input_channels: 1,
            depth: 3,
            base_channels: 16,
            kernel_size: 3,
            window: crate::series::DEFAULT_WINDOW,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 8,
            label_weight: None,
            weight_gamma: 1.0,
            weight_scale: 1.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::validation("need at least one input channel"));
        }
        if self.depth == 0 {
            return Err(Error::validation("need at least one encoder stage"));
        }
        if self.base_channels == 0 {
            return Err(Error::validation("need at least one channel"));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::validation(format!(
                "kernel width must be odd, got {}",
                self.kernel_size
            )));
        }
        let div = 1usize << self.depth;
        if self.window == 0 || self.window % div != 0 {
            return Err(Error::validation(format!(
                "window {} must be a positive multiple of 2^depth = {div}",
                self.window
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::validation("learning rate must be finite and non-negative"));
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0 && self.beta2 >= 0.0 && self.beta2 < 1.0) {
            return Err(Error::validation("momentum decays must lie in [0, 1)"));
        }
        if let Some(w) = self.label_weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation("label weight must be positive"));
            }
        }
        if !(self.weight_gamma.is_finite() && self.weight_gamma >= 0.0)
            || !(self.weight_scale.is_finite() && self.weight_scale >= 0.0)
        {
            return Err(Error::validation("value-weight parameters must be non-negative"));
        }
        Ok(())
    }

    fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }
}

/// A training batch: `size` windows with per-point labels and value weights.
/// Inputs are channel-major per sample and are expected pre-normalized.
#[derive(Debug, Clone)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<bool>,
    weights: Vec<f64>,
    size: usize,
}

impl Batch {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<bool>,
        weights: Vec<f64>,
        size: usize,
        config: &NetConfig,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::validation("batch must contain at least one window"));
        }
        let per_input = config.input_channels * config.window;
        if inputs.len() != size * per_input {
            return Err(Error::validation(format!(
                "expected {} input values for {size} windows, got {}",
                size * per_input,
                inputs.len()
            )));
        }
        if labels.len() != size * config.window || weights.len() != size * config.window {
            return Err(Error::validation("labels and weights must cover every position"));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("batch inputs must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("weights must be finite and non-negative"));
        }
        Ok(Batch {
            inputs,
            labels,
            weights,
            size,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The detection network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetConfig,
    encoder: Vec<Conv1d>,
    decoder: Vec<Conv1d>,
    head: Conv1d,
}

/// Activations recorded during one sample's forward pass, consumed by the
/// backward pass.
struct Trace {
    /// Post-ReLU encoder activations per stage (the skip sources).
    enc_act: Vec<Vec<f64>>,
    /// Pool winner offsets per stage.
    pool_arg: Vec<Vec<u8>>,
    /// Pooled maps per stage; the last is the bottleneck.
    pooled: Vec<Vec<f64>>,
    /// Concatenated decoder inputs, in processing order (deepest first).
    dec_cat: Vec<Vec<f64>>,
    /// Post-ReLU decoder outputs, in processing order.
    dec_act: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl Network {
    /// Builds a network with He-initialized weights. Shape constraints are
    /// enforced here so the forward pass never sees an inconsistent model.
    pub fn new(config: NetConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let depth = config.depth;
        let mut encoder = Vec::with_capacity(depth);
        for i in 0..depth {
            let in_ch = if i == 0 {
                config.input_channels
            } else {
                config.channels(i - 1)
            };
            let mut conv = Conv1d::new(in_ch, config.channels(i), config.kernel_size);
            conv.init(rng);
            encoder.push(conv);
        }
        let mut decoder = Vec::with_capacity(depth);
        for j in 0..depth {
            let carried = config.channels((j + 1).min(depth - 1));
            let in_ch = carried + config.channels(j);
            let mut conv = Conv1d::new(in_ch, config.channels(j), config.kernel_size);
            conv.init(rng);
            decoder.push(conv);
        }
        let mut head = Conv1d::new(config.channels(0), 1, 1);
        head.init(rng);
        Ok(Network {
            config,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// True when `other` describes the same architecture: the shape-defining
    /// fields match, ignoring training-only hyperparameters.
    pub fn architecture_matches(&self, other: &NetConfig) -> bool {
        let a = &self.config;
        a.input_mode == other.input_mode
            && a.input_channels == other.input_channels
            && a.depth == other.depth
            && a.base_channels == other.base_channels
            && a.kernel_size == other.kernel_size
            && a.window == other.window
    }

    fn layer_refs(&self) -> Vec<&Conv1d> {
        let mut refs: Vec<&Conv1d> = self.encoder.iter().collect();
        refs.extend(self.decoder.iter());
        refs.push(&self.head);
        refs
    }

    fn layer_refs_mut(&mut self) -> Vec<&mut Conv1d> {
        let mut refs: Vec<&mut Conv1d> = self.encoder.iter_mut().collect();
        refs.extend(self.decoder.iter_mut());
        refs.push(&mut self.head);
        refs
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_refs().iter().map(|l| l.parameter_count()).sum()
    }

    /// Copies every parameter into one flat vector: encoder stages, decoder
    /// stages, then the head, each as weights followed by biases.
    pub fn get_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in self.layer_refs() {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in self.layer_refs_mut() {
            let w = layer.weight.len();
            layer.weight.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    fn forward_trace(&self, sample: &[f64]) -> Trace {
        let cfg = &self.config;
        let depth = cfg.depth;
        let mut enc_act = Vec::with_capacity(depth);
        let mut pool_arg = Vec::with_capacity(depth);
        let mut pooled = Vec::with_capacity(depth);

        let mut width = cfg.window;
        let mut cur: Vec<f64> = sample.to_vec();
        for i in 0..depth {
            let mut a = self.encoder[i].forward(&cur, width);
            relu_inplace(&mut a);
            let (p, arg) = maxpool2(&a, cfg.channels(i), width);
            enc_act.push(a);
            pool_arg.push(arg);
            pooled.push(p);
            cur = pooled[i].clone();
            width /= 2;
        }

        let mut dec_cat = Vec::with_capacity(depth);
        let mut dec_act = Vec::with_capacity(depth);
        let mut cur_ch = cfg.channels(depth - 1);
        for s in 0..depth {
            let j = depth - 1 - s;
            let up = upsample2(&cur, cur_ch, width);
            width *= 2;
            let cat = concat(&up, &enc_act[j]);
            let mut a = self.decoder[j].forward(&cat, width);
            relu_inplace(&mut a);
            dec_cat.push(cat);
            dec_act.push(a);
            cur = dec_act[s].clone();
            cur_ch = cfg.channels(j);
        }

        let mut probs = self.head.forward(&cur, width);
        sigmoid_inplace(&mut probs);
        Trace {
            enc_act,
            pool_arg,
            pooled,
            dec_cat,
            dec_act,
            probs,
        }
    }

    /// Scores a batch of pre-normalized windows: one probability per input
    /// position, sample-major.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let per_sample = self.config.input_channels * self.config.window;
        if per_sample == 0 || inputs.len() % per_sample != 0 {
            return Err(Error::validation(format!(
                "input length {} is not a multiple of {per_sample}",
                inputs.len()
            )));
        }
        let mut probs = Vec::with_capacity(inputs.len() / per_sample * self.config.window);
        for sample in inputs.chunks_exact(per_sample) {
            probs.extend(self.forward_trace(sample).probs);
        }
        Ok(probs)
    }

    /// Loss and exact parameter gradients for one batch, flattened in
    /// [`Network::get_parameters`] order.
    pub fn backward_batch(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let cfg = &self.config;
        let w = cfg.window;
        let per_sample = cfg.input_channels * w;
        let beta = cfg.label_weight.unwrap_or(1.0);

        // The loss normalizes by the total batch weight, so it must be
        // computed before any per-sample gradient.
        let mut weight_sum = 0.0;
        for i in 0..batch.size * w {
            let scale = if batch.labels[i] { beta } else { 1.0 };
            weight_sum += batch.weights[i] * scale;
        }

        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layer_refs()
            .iter()
            .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut total_loss = 0.0;

        for s in 0..batch.size {
            let sample = &batch.inputs[s * per_sample..(s + 1) * per_sample];
            let labels = &batch.labels[s * w..(s + 1) * w];
            let weights = &batch.weights[s * w..(s + 1) * w];
            let trace = self.forward_trace(sample);

            let (loss, g_prob) =
                weighted_bce_terms(&trace.probs, labels, weights, beta, weight_sum);
            total_loss += loss;
            self.backward_sample(sample, &trace, &g_prob, &mut grads);
        }

        let mut flat = Vec::with_capacity(self.parameter_count());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        Ok((total_loss, flat))
    }

    fn backward_sample(
        &self,
        sample: &[f64],
        trace: &Trace,
        g_prob: &[f64],
        grads: &mut [(Vec<f64>, Vec<f64>)],
    ) {
        let cfg = &self.config;
        let depth = cfg.depth;
        let w = cfg.window;
        let head_index = 2 * depth;

        // Through the logistic map: dL/dz = dL/dp * p * (1 - p).
        let mut g_z = vec![0.0; w];
        for t in 0..w {
            let p = trace.probs[t];
            g_z[t] = g_prob[t] * p * (1.0 - p);
        }

        let last_act = &trace.dec_act[depth - 1];
        let (g_head_w, g_head_b) = {
            let (gw, gb) = &mut grads[head_index];
            (gw, gb)
        };
        let mut g_cur = self.head.backward(last_act, w, &g_z, g_head_w, g_head_b);

        // Decoder stages, undone in reverse processing order. The gradient
        // arriving at each stage's output splits at the concatenation into a
        // skip part (credited to the encoder activation) and an upsampled
        // part (carried further down).
        let mut g_skip: Vec<Vec<f64>> = (0..depth)
            .map(|i| vec![0.0; cfg.channels(i) * (cfg.window >> i)])
            .collect();
        for s in (0..depth).rev() {
            let j = depth - 1 - s;
            let width_j = cfg.window >> j;
            relu_backward_inplace(&mut g_cur, &trace.dec_act[s]);
            let (gw, gb) = &mut grads[depth + j];
            let g_cat = self
                .decoder[j]
                .backward(&trace.dec_cat[s], width_j, &g_cur, gw, gb);
            let carried = cfg.channels((j + 1).min(depth - 1));
            let split = carried * width_j;
            for (dst, src) in g_skip[j].iter_mut().zip(&g_cat[split..]) {
                *dst += src;
            }
            g_cur = upsample2_backward(&g_cat[..split], carried, width_j / 2);
        }

        // g_cur now sits on the bottleneck (the last pooled map); walk the
        // encoder back down to the input.
        for i in (0..depth).rev() {
            let width_i = cfg.window >> i;
            let mut g_act = maxpool2_backward(&g_cur, &trace.pool_arg[i], cfg.channels(i), width_i / 2);
            for (dst, src) in g_act.iter_mut().zip(&g_skip[i]) {
                *dst += src;
            }
            relu_backward_inplace(&mut g_act, &trace.enc_act[i]);
            let input_i: &[f64] = if i == 0 { sample } else { &trace.pooled[i - 1] };
            let (gw, gb) = &mut grads[i];
            g_cur = self.encoder[i].backward(input_i, width_i, &g_act, gw, gb);
        }
    }
}

/// Normalizes a window to a robust standard score: subtract the median,
/// divide by `1.4826 * MAD`. A window with no spread maps to zeros. The same
/// preparation runs at training and scoring time.
pub fn normalize_window(values: &[f64]) -> Vec<f64> {
    let center = stats::median(values);
    let scale = stats::robust_sigma(values).max(1e-9);
    values.iter().map(|v| (v - center) / scale).collect()
}

/// Weight ceiling: one wild point must not dominate its whole window.
const VALUE_WEIGHT_CAP: f64 = 10.0;

/// Per-point loss emphasis from robust deviation within the window:
/// `1 + scale * (|x - median| / (1.4826 * MAD + eps))^gamma`, capped.
/// Deviation is measured on ratios, so the weights are invariant to affine
/// rescaling of the window.
pub fn compute_value_weights(values: &[f64], gamma: f64, scale: f64) -> Vec<f64> {
    let center = stats::median(values);
    let denom = stats::robust_sigma(values) + 1e-9;
    values
        .iter()
        .map(|v| {
            let dev = (v - center).abs() / denom;
            (1.0 + scale * dev.powf(gamma)).min(VALUE_WEIGHT_CAP)
        })
        .collect()
}

/// Probability clamp for the cross-entropy terms.
const PROB_EPSILON: f64 = 1e-7;

/// Weighted binary cross entropy over a batch of probabilities.
///
/// `loss = (1 / sum w~) * sum_i w~_i * [-y_i ln p_i - (1 - y_i) ln(1 - p_i)]`
/// with `w~_i = weights_i * (beta if y_i else 1)` and probabilities clamped
/// to `[1e-7, 1 - 1e-7]`. Returns the loss and its gradient with respect to
/// each probability.
pub fn weighted_bce_loss(
    probs: &[f64],
    labels: &[bool],
    weights: &[f64],
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    if probs.len() != labels.len() || probs.len() != weights.len() {
        return Err(Error::validation(
            "probabilities, labels, and weights must have equal length",
        ));
    }
    let mut weight_sum = 0.0;
    for i in 0..probs.len() {
        weight_sum += weights[i] * if labels[i] { beta } else { 1.0 };
    }
    Ok(weighted_bce_terms(probs, labels, weights, beta, weight_sum))
}

/// Shared core: loss contribution and gradient given an external weight
/// normalizer (the full batch's weight sum).
fn weighted_bce_terms(
    probs: &[f64],
    labels: &[bool],
    weights: &[f64],
    beta: f64,
    weight_sum: f64,
) -> (f64, Vec<f64>) {
    let inv = 1.0 / weight_sum;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for i in 0..probs.len() {
        let p = probs[i].clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        let w = weights[i] * if labels[i] { beta } else { 1.0 };
        if labels[i] {
            loss -= w * p.ln();
            grad[i] = -w * inv / p;
        } else {
            loss -= w * (1.0 - p).ln();
            grad[i] = w * inv / (1.0 - p);
        }
    }
    (loss * inv, grad)
}

/// Trains in place with Adam, shuffling batch order every epoch. Returns the
/// mean batch loss per epoch. A non-finite loss or parameter aborts with a
/// diagnostic naming the epoch and batch; parameters keep their last finite
/// values.
pub fn fit(net: &mut Network, batches: &[Batch], rng: &mut impl Rng) -> Result<Vec<f64>> {
    if batches.is_empty() {
        return Err(Error::validation("cannot train on an empty batch list"));
    }
    let cfg = net.config.clone();
    let count = net.parameter_count();
    let mut m = vec![0.0; count];
    let mut v = vec![0.0; count];
    let mut step = 0u64;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.shuffle(rng);
        let mut epoch_loss = 0.0;

        for (position, &index) in order.iter().enumerate() {
            let (loss, grads) = net.backward_batch(&batches[index])?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {position} (dataset batch {index}); \
                     training aborted before the parameter update"
                )));
            }
            epoch_loss += loss;

            step += 1;
            let mut params = net.get_parameters();
            let bc1 = 1.0 - cfg.beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.beta2.powi(step as i32);
            for k in 0..count {
                let g = grads[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + 1e-8);
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite parameter after epoch {epoch}, batch {position}; training aborted"
                )));
            }
            net.set_parameters(&params)?;
        }
        trace.push(epoch_loss / batches.len() as f64);
    }
    Ok(trace)
}

/// Scores the last position of one window. The window is normalized here
/// with the same robust standardization used during training. A score at or
/// above the threshold flags an anomaly, so exact ties flag.
pub fn predict_last(net: &Network, window: &[f64], threshold: f64) -> Result<(f64, bool)> {
    let expected = net.config.input_channels * net.config.window;
    if window.len() != expected {
        return Err(Error::validation(format!(
            "expected a window of {expected} values, got {}",
            window.len()
        )));
    }
    let normalized = normalize_window(window);
    let probs = net.forward_batch(&normalized)?;
    let score = probs[net.config.window - 1];
    Ok((score, score >= threshold))
}

/// Model file layout. The config hash binds the parameters to the
/// configuration they were trained with.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: NetConfig,
    config_hash: String,
    parameters: Vec<f64>,
}

const MODEL_FORMAT: &str = "rtad-model";
const MODEL_VERSION: u32 = 1;

/// Conventional extension for model files.
pub const MODEL_EXTENSION: &str = "rtad";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hash of the canonical JSON encoding of a configuration.
pub fn config_hash(config: &NetConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serialization cannot fail");
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}

/// Serializes a model. The encoding is deterministic: identical parameters
/// and config produce identical bytes.
pub fn write_model(net: &Network, writer: &mut impl Write) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: net.config.clone(),
        config_hash: config_hash(&net.config),
        parameters: net.get_parameters(),
    };
    serde_json::to_writer(&mut *writer, &file)
        .map_err(|e| Error::Numeric(format!("model serialization failed: {e}")))?;
    writer.flush()?;
    Ok(())
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_model(net, &mut BufWriter::new(file))
}

/// Deserializes a model, rejecting unknown formats, newer versions, configs
/// that fail validation, hash mismatches, and parameter arrays of the wrong
/// shape or with non-finite values.
pub fn read_model(reader: &mut impl Read) -> Result<Network> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::ModelFormat(format!("unreadable model file: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!(
            "unknown format {:?}; expected {MODEL_FORMAT:?}",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {}; this build reads version {MODEL_VERSION}",
            file.version
        )));
    }
    file.config
        .validate()
        .map_err(|e| Error::ModelFormat(format!("invalid config in model file: {e}")))?;
    let expected_hash = config_hash(&file.config);
    if file.config_hash != expected_hash {
        return Err(Error::ModelFormat(format!(
            "config hash mismatch: file says {}, config hashes to {expected_hash}",
            file.config_hash
        )));
    }
    if file.parameters.iter().any(|p| !p.is_finite()) {
        return Err(Error::ModelFormat("non-finite parameter".to_string()));
    }
    // Reconstruct with a throwaway seed, then overwrite every parameter.
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut net = Network::new(file.config, &mut rng)?;
    if file.parameters.len() != net.parameter_count() {
        return Err(Error::ModelFormat(format!(
            "expected {} parameters, found {}",
            net.parameter_count(),
            file.parameters.len()
        )));
    }
    net.set_parameters(&file.parameters)?;
    Ok(net)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let file = std::fs::File::open(path.as_ref())?;
    read_model(&mut BufReader::new(file))
}
