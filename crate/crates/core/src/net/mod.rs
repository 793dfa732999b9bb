//! Siamese embedding network: a small convolutional net mapping a
//! [`RangeHistogramImage`] to a fixed-length [`Fingerprint`], with exact
//! backpropagation of the contrastive loss through both weight-shared branches.

mod checkpoint;
mod loss;
mod pairs;
mod train;

pub use checkpoint::{config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{classify, contrastive_loss, embedding_distance, loss_gradients, PairEvaluation};
pub use pairs::{mine_pairs, TrainingPair};
pub use train::{history_csv, train, EpochStats, TrainOptions, TrainingOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::representation::RangeHistogramImage;

/// Same-padded convolution, ReLU, then max-pooling along the bucket axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub channels: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_rings: usize,
    pub input_buckets: usize,
    pub conv: Vec<ConvLayer>,
    /// Widths of the ReLU dense layers between the convolutions and the output.
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub margin: f64,
    pub seed: u64,
}

impl NetworkConfig {
    /// Two 3×3 conv layers (8 and 16 channels, 2× pooling), a 128-wide hidden
    /// layer and a 64-dimensional output, margin 12.
    pub fn for_input(input_rings: usize, input_buckets: usize) -> Self {
        Self {
            input_rings,
            input_buckets,
            conv: vec![
                ConvLayer {
                    kernel_h: 3,
                    kernel_w: 3,
                    channels: 8,
                    pool: 2,
                },
                ConvLayer {
                    kernel_h: 3,
                    kernel_w: 3,
                    channels: 16,
                    pool: 2,
                },
            ],
            hidden: vec![128],
            output_dim: 64,
            margin: 12.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_rings == 0 || self.input_buckets == 0 {
            return bad("network input shape must be non-empty".into());
        }
        if self.output_dim == 0 {
            return bad("output dimension must be positive".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        let mut width = self.input_buckets;
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel_h % 2 == 0 || c.kernel_w % 2 == 0 {
                return bad(format!("conv{}: kernel sizes must be odd", i + 1));
            }
            if c.channels == 0 || c.pool == 0 {
                return bad(format!("conv{}: channels and pool must be positive", i + 1));
            }
            width /= c.pool;
            if width == 0 {
                return bad(format!("conv{}: pooling collapses the bucket axis", i + 1));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    /// (channels, rows, cols) entering each conv layer, plus the final one.
    fn conv_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = vec![(1, self.input_rings, self.input_buckets)];
        for c in &self.conv {
            let (_, h, w) = *shapes.last().unwrap();
            shapes.push((c.channels, h, w / c.pool));
        }
        shapes
    }

    /// (fan_in, fan_out) of each dense layer, output layer last.
    fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let (c, h, w) = *self.conv_shapes().last().unwrap();
        let mut fan_in = c * h * w;
        let mut out = Vec::new();
        for &width in self.hidden.iter().chain(std::iter::once(&self.output_dim)) {
            out.push((fan_in, width));
            fan_in = width;
        }
        out
    }

    /// (weight count, bias count, fan-in) per layer in declared order.
    fn tensor_shapes(&self) -> Vec<(usize, usize, usize)> {
        let shapes = self.conv_shapes();
        let mut out = Vec::new();
        for (l, c) in self.conv.iter().enumerate() {
            let c_in = shapes[l].0;
            let fan_in = c_in * c.kernel_h * c.kernel_w;
            out.push((c.channels * fan_in, c.channels, fan_in));
        }
        for (fan_in, fan_out) in self.dense_shapes() {
            out.push((fan_in * fan_out, fan_out, fan_in));
        }
        out
    }

    fn layer_name(&self, layer: usize) -> String {
        let nc = self.conv.len();
        if layer < nc {
            format!("conv{}", layer + 1)
        } else if layer - nc < self.hidden.len() {
            format!("dense{}", layer - nc + 1)
        } else {
            "output".to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Weights of one branch; both siamese branches share a single instance.
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .tensor_shapes()
            .into_iter()
            .map(|(w, b, _)| LayerParams {
                weights: vec![0.0; w],
                bias: vec![0.0; b],
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Gaussian weights with standard deviation 1/√fan-in, zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (layer, (_, _, fan_in)) in params.layers.iter_mut().zip(config.tensor_shapes()) {
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            for w in &mut layer.weights {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub(crate) fn from_layers(config: NetworkConfig, layers: Vec<LayerParams>) -> Result<Self> {
        let shapes = config.tensor_shapes();
        if layers.len() != shapes.len()
            || layers
                .iter()
                .zip(&shapes)
                .any(|(l, (w, b, _))| l.weights.len() != *w || l.bias.len() != *b)
        {
            return Err(Error::Format("tensor shapes do not match network config".into()));
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Every scalar in declared order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|v| *v = value);
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }
}

/// The learned embedding of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint(Vec<f64>);

impl Fingerprint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: "fingerprint".into(),
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

struct ConvTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
}

struct DenseTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Trace {
    conv: Vec<ConvTrace>,
    dense: Vec<DenseTrace>,
    pub output: Vec<f64>,
}

fn check_finite(values: &[f64], config: &NetworkConfig, layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: config.layer_name(layer),
        })
    }
}

fn check_shape(config: &NetworkConfig, r: &RangeHistogramImage) -> Result<()> {
    let expected = (config.input_rings, config.input_buckets);
    if r.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: r.shape(),
        });
    }
    Ok(())
}

/// Embeds one representation.
pub fn forward(params: &NetworkParams, r: &RangeHistogramImage) -> Result<Fingerprint> {
    Fingerprint::new(forward_trace(params, r)?.output)
}

pub(crate) fn forward_trace(params: &NetworkParams, r: &RangeHistogramImage) -> Result<Trace> {
    let config = &params.config;
    check_shape(config, r)?;
    let shapes = config.conv_shapes();
    let mut x = r.as_slice().to_vec();
    let mut conv = Vec::with_capacity(config.conv.len());
    for (l, spec) in config.conv.iter().enumerate() {
        let (c_in, h, w) = shapes[l];
        let p = &params.layers[l];
        let pre = conv_forward(&x, c_in, h, w, spec, &p.weights, &p.bias);
        check_finite(&pre, config, l)?;
        let (pooled, argmax) = relu_pool(&pre, spec.channels, h, w, spec.pool);
        conv.push(ConvTrace {
            input: std::mem::replace(&mut x, pooled),
            pre,
            argmax,
        });
    }
    let nc = config.conv.len();
    let dense_shapes = config.dense_shapes();
    let mut dense = Vec::with_capacity(dense_shapes.len());
    for (k, &(fan_in, fan_out)) in dense_shapes.iter().enumerate() {
        let p = &params.layers[nc + k];
        let mut pre = p.bias.clone();
        for (o, acc) in pre.iter_mut().enumerate() {
            let row = &p.weights[o * fan_in..(o + 1) * fan_in];
            *acc += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        }
        check_finite(&pre, config, nc + k)?;
        let last = k + 1 == dense_shapes.len();
        let out = if last {
            pre.clone()
        } else {
            pre.iter().map(|v| v.max(0.0)).collect()
        };
        debug_assert_eq!(out.len(), fan_out);
        dense.push(DenseTrace {
            input: std::mem::replace(&mut x, out),
            pre,
        });
    }
    Ok(Trace {
        conv,
        dense,
        output: x,
    })
}

fn conv_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    spec: &ConvLayer,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; spec.channels * h * w];
    for co in 0..spec.channels {
        let plane = &mut out[co * h * w..(co + 1) * h * w];
        plane.fill(bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wt = weights[((co * c_in + ci) * kh + ky) * kw + kx];
                    // output row y reads input row y + ky − ph
                    let y0 = ph.saturating_sub(ky);
                    let y1 = (h + ph).saturating_sub(ky).min(h);
                    let x0 = pw.saturating_sub(kx);
                    let x1 = (w + pw).saturating_sub(kx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = y + ky - ph;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - pw..sy * w + x1 + kx - pw];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wt * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// ReLU followed by max-pooling along columns; ties keep the first column.
fn relu_pool(pre: &[f64], c: usize, h: usize, w: usize, pool: usize) -> (Vec<f64>, Vec<usize>) {
    let wo = w / pool;
    let mut out = Vec::with_capacity(c * h * wo);
    let mut argmax = Vec::with_capacity(c * h * wo);
    for ch in 0..c {
        for y in 0..h {
            let base = (ch * h + y) * w;
            for xo in 0..wo {
                let mut best = base + xo * pool;
                for x in 1..pool {
                    let i = base + xo * pool + x;
                    if pre[i] > pre[best] {
                        best = i;
                    }
                }
                out.push(pre[best].max(0.0));
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
pub(crate) fn backward(
    params: &NetworkParams,
    trace: &Trace,
    grad_output: &[f64],
    grads: &mut NetworkParams,
) -> Result<()> {
    let config = &params.config;
    let nc = config.conv.len();
    let dense_shapes = config.dense_shapes();
    let mut g = grad_output.to_vec();
    for k in (0..dense_shapes.len()).rev() {
        let (fan_in, _) = dense_shapes[k];
        let t = &trace.dense[k];
        let last = k + 1 == dense_shapes.len();
        if !last {
            for (gv, pre) in g.iter_mut().zip(&t.pre) {
                if *pre <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        let p = &params.layers[nc + k];
        let gl = &mut grads.layers[nc + k];
        let mut g_in = vec![0.0; fan_in];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            gl.bias[o] += go;
            let row = o * fan_in..(o + 1) * fan_in;
            for ((gw, x), (gi, wv)) in gl.weights[row.clone()]
                .iter_mut()
                .zip(&t.input)
                .zip(g_in.iter_mut().zip(&p.weights[row]))
            {
                *gw += go * x;
                *gi += go * wv;
            }
        }
        check_finite(&g_in, config, nc + k)?;
        g = g_in;
    }
    let shapes = config.conv_shapes();
    for l in (0..nc).rev() {
        let spec = &config.conv[l];
        let (c_in, h, w) = shapes[l];
        let t = &trace.conv[l];
        let mut d_pre = vec![0.0; spec.channels * h * w];
        for (&idx, &gv) in t.argmax.iter().zip(&g) {
            if t.pre[idx] > 0.0 {
                d_pre[idx] += gv;
            }
        }
        let need_input_grad = l > 0;
        g = conv_backward(
            &t.input,
            &d_pre,
            c_in,
            h,
            w,
            spec,
            &params.layers[l].weights,
            &mut grads.layers[l],
            need_input_grad,
        );
        check_finite(&g, config, l)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    d_pre: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    spec: &ConvLayer,
    weights: &[f64],
    grads: &mut LayerParams,
    need_input_grad: bool,
) -> Vec<f64> {
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut d_in = if need_input_grad {
        vec![0.0; c_in * h * w]
    } else {
        Vec::new()
    };
    for co in 0..spec.channels {
        let dp = &d_pre[co * h * w..(co + 1) * h * w];
        grads.bias[co] += dp.iter().sum::<f64>();
        for ci in 0..c_in {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wi = ((co * c_in + ci) * kh + ky) * kw + kx;
                    let y0 = ph.saturating_sub(ky);
                    let y1 = (h + ph).saturating_sub(ky).min(h);
                    let x0 = pw.saturating_sub(kx);
                    let x1 = (w + pw).saturating_sub(kx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - ph;
                        let d = &dp[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - pw..sy * w + x1 + kx - pw];
                        acc += d.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if need_input_grad {
                            let wt = weights[wi];
                            let di = &mut d_in[ci * h * w + sy * w + x0 + kx - pw..ci * h * w + sy * w + x1 + kx - pw];
                            for (dv, gv) in di.iter_mut().zip(d) {
                                *dv += wt * gv;
                            }
                        }
                    }
                    grads.weights[wi] += acc;
                }
            }
        }
    }
    d_in
}
