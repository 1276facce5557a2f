//! Feed-forward network with dense and valid (unpadded) 2D convolution layers,
//! no biases, optional ReLU, and one linear classifier head per task.
//!
//! Batches are matrices with one sample per column. Convolutions are computed
//! through im2col, so every layer is a plain matrix product `W · X` where `X`
//! holds input vectors (dense) or unfolded patches (conv) as columns. That
//! same `X` is what gets captured as the layer's representation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
    },
    /// Input is channel-major `in_channels × height × width`.
    Conv2d {
        in_channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        out_channels: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv2d { activation, .. } => activation,
        }
    }

    /// `(rows, cols)` of the weight matrix. `cols` is also the dimension of
    /// the representation vectors for this layer.
    pub fn weight_shape(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense {
                input_dim, output_dim, ..
            } => (output_dim, input_dim),
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                out_channels,
                ..
            } => (out_channels, in_channels * kernel_h * kernel_w),
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { input_dim, .. } => input_dim,
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => in_channels * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { output_dim, .. } => output_dim,
            LayerSpec::Conv2d { out_channels, .. } => {
                let (oh, ow) = self.output_hw();
                out_channels * oh * ow
            }
        }
    }

    /// Output spatial size of a conv layer; `(1, 1)` for dense.
    pub fn output_hw(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { .. } => (1, 1),
            LayerSpec::Conv2d {
                height,
                width,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => ((height - kernel_h) / stride + 1, (width - kernel_w) / stride + 1),
        }
    }

    fn fan_out(&self) -> usize {
        match *self {
            LayerSpec::Dense { output_dim, .. } => output_dim,
            LayerSpec::Conv2d {
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => out_channels * kernel_h * kernel_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense {
                input_dim, output_dim, ..
            } => {
                if input_dim == 0 || output_dim == 0 {
                    return Err(Error::Config("dense layer dimensions must be positive".into()));
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                kernel_h,
                kernel_w,
                stride,
                out_channels,
                ..
            } => {
                if [in_channels, height, width, kernel_h, kernel_w, stride, out_channels].contains(&0) {
                    return Err(Error::Config("conv layer dimensions must be positive".into()));
                }
                if kernel_h > height || kernel_w > width {
                    return Err(Error::Config("conv kernel larger than its input".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    heads: Vec<Matrix>,
}

/// Inputs presented to each layer during a forward pass, one column per
/// sample (dense) or per `(sample, position)` patch (conv, sample-major).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub layers: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `classes × batch`.
    pub logits: Matrix,
    pub activations: Option<LayerActivations>,
}

/// Gradients of the mean cross-entropy loss for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Matrix>,
    pub head: Matrix,
    pub task: usize,
    pub loss: f64,
}

struct Trace {
    /// Layer inputs in matrix-product form (dense: in × B, conv: K × B·P).
    inputs: Vec<Matrix>,
    /// Pre-activations in matrix-product form (out × B or out_ch × B·P).
    pre: Vec<Matrix>,
    /// Output of the last layer, `features × batch`.
    features: Matrix,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..=a))
}

impl Network {
    /// Builds a network with Glorot-uniform weights. Consecutive layers must
    /// chain: each layer's output length equals the next one's input length.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        check_chain(specs)?;
        let layers = specs
            .iter()
            .map(|spec| {
                let (rows, cols) = spec.weight_shape();
                Layer {
                    spec: *spec,
                    weight: glorot(rows, cols, cols, spec.fan_out(), rng),
                }
            })
            .collect();
        Ok(Self {
            layers,
            heads: Vec::new(),
        })
    }

    /// Reassembles a network from stored parts (checkpoints).
    pub fn from_parts(layers: Vec<Layer>, heads: Vec<Matrix>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_chain(&specs)?;
        for l in &layers {
            if l.weight.shape() != l.spec.weight_shape() {
                return Err(Error::Dimension {
                    op: "layer weight",
                    lhs: l.weight.shape(),
                    rhs: l.spec.weight_shape(),
                });
            }
        }
        let features = specs.last().map(|s| s.output_len()).unwrap_or(0);
        for h in &heads {
            if h.cols() != features {
                return Err(Error::Dimension {
                    op: "head weight",
                    lhs: h.shape(),
                    rhs: (h.rows(), features),
                });
            }
        }
        Ok(Self { layers, heads })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn heads(&self) -> &[Matrix] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Matrix] {
        &mut self.heads
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.input_len()
    }

    pub fn feature_len(&self) -> usize {
        self.layers.last().expect("non-empty").spec.output_len()
    }

    /// Adds a classifier head for a new task and returns its index.
    pub fn add_head<R: Rng + ?Sized>(&mut self, classes: usize, rng: &mut R) -> usize {
        let f = self.feature_len();
        self.heads.push(glorot(classes, f, f, classes, rng));
        self.heads.len() - 1
    }

    fn head(&self, task: usize) -> Result<&Matrix> {
        self.heads.get(task).ok_or(Error::MissingHead(task))
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() != self.input_len() || batch.cols() == 0 {
            return Err(Error::Dimension {
                op: "forward input",
                lhs: batch.shape(),
                rhs: (self.input_len(), batch.cols().max(1)),
            });
        }
        Ok(())
    }

    fn trace(&self, batch: &Matrix) -> Result<Trace> {
        let b = batch.cols();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let input = match layer.spec {
                LayerSpec::Dense { .. } => x,
                LayerSpec::Conv2d { .. } => im2col(&layer.spec, &x),
            };
            let z = layer.weight.matmul(&input)?;
            let a = match layer.spec.activation() {
                Activation::Relu => z.map(|v| v.max(0.0)),
                Activation::Identity => z.clone(),
            };
            x = match layer.spec {
                LayerSpec::Dense { .. } => a,
                LayerSpec::Conv2d { .. } => conv_to_samples(&layer.spec, &a, b),
            };
            inputs.push(input);
            pre.push(z);
        }
        Ok(Trace {
            inputs,
            pre,
            features: x,
        })
    }

    /// Logits for `task`'s head, optionally capturing every layer's input.
    pub fn forward(&self, batch: &Matrix, task: usize, capture: bool) -> Result<Forward> {
        let head = self.head(task)?;
        self.check_batch(batch)?;
        let trace = self.trace(batch)?;
        let logits = head.matmul(&trace.features)?;
        Ok(Forward {
            logits,
            activations: capture.then_some(LayerActivations { layers: trace.inputs }),
        })
    }

    /// Inputs seen by every layer for `batch`, without touching any head.
    pub fn capture(&self, batch: &Matrix) -> Result<LayerActivations> {
        self.check_batch(batch)?;
        Ok(LayerActivations {
            layers: self.trace(batch)?.inputs,
        })
    }

    /// Outputs of the last hidden layer (before any head).
    pub fn features(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        Ok(self.trace(batch)?.features)
    }

    /// Predicted class per sample.
    pub fn predict(&self, batch: &Matrix, task: usize) -> Result<Vec<usize>> {
        let logits = self.forward(batch, task, false)?.logits;
        Ok((0..logits.cols())
            .map(|c| {
                let mut best = 0;
                for r in 1..logits.rows() {
                    if logits.get(r, c) > logits.get(best, c) {
                        best = r;
                    }
                }
                best
            })
            .collect())
    }

    /// Mean softmax cross-entropy loss and its gradients for every layer and
    /// for `task`'s head.
    pub fn backward(&self, batch: &Matrix, labels: &[usize], task: usize) -> Result<Gradients> {
        let head = self.head(task)?;
        self.check_batch(batch)?;
        let b = batch.cols();
        if labels.len() != b {
            return Err(Error::Dimension {
                op: "labels",
                lhs: (labels.len(), 1),
                rhs: (b, 1),
            });
        }
        let classes = head.rows();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        let trace = self.trace(batch)?;
        let logits = head.matmul(&trace.features)?;

        let mut dlogits = Matrix::zeros(classes, b);
        let mut loss = 0.0;
        for (c, &label) in labels.iter().enumerate() {
            let max = (0..classes).fold(f64::NEG_INFINITY, |m, r| m.max(logits.get(r, c)));
            let mut denom = 0.0;
            for r in 0..classes {
                denom += math::exp(logits.get(r, c) - max);
            }
            let log_denom = math::ln(denom);
            loss -= logits.get(label, c) - max - log_denom;
            for r in 0..classes {
                let p = math::exp(logits.get(r, c) - max - log_denom);
                let t = if r == label { 1.0 } else { 0.0 };
                dlogits.set(r, c, (p - t) / b as f64);
            }
        }
        loss /= b as f64;

        let head_grad = dlogits.matmul_transpose(&trace.features)?;
        let mut upstream = head.transpose_matmul(&dlogits)?;
        let mut grads = vec![Matrix::zeros(0, 0); self.layers.len()];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz_samples = upstream;
            let mut dz = match layer.spec {
                LayerSpec::Dense { .. } => dz_samples,
                LayerSpec::Conv2d { .. } => samples_to_conv(&layer.spec, &dz_samples),
            };
            if layer.spec.activation() == Activation::Relu {
                for (g, z) in dz.as_mut_slice().iter_mut().zip(trace.pre[l].as_slice()) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grads[l] = dz.matmul_transpose(&trace.inputs[l])?;
            upstream = if l > 0 {
                let dinput = layer.weight.transpose_matmul(&dz)?;
                match layer.spec {
                    LayerSpec::Dense { .. } => dinput,
                    LayerSpec::Conv2d { .. } => col2im(&layer.spec, &dinput, b),
                }
            } else {
                Matrix::zeros(0, 0)
            };
        }
        if !loss.is_finite() {
            return Err(Error::Numerical(alloc::format!("non-finite loss {loss}")));
        }
        Ok(Gradients {
            layers: grads,
            head: head_grad,
            task,
            loss,
        })
    }
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for s in specs {
        s.validate()?;
    }
    for w in specs.windows(2) {
        if w[0].output_len() != w[1].input_len() {
            return Err(Error::Config(alloc::format!(
                "layer output {} does not feed next input {}",
                w[0].output_len(),
                w[1].input_len()
            )));
        }
    }
    Ok(())
}

/// Unfolds a batch (`C·H·W × B`) into patch columns (`C·kh·kw × B·P`), sample
/// major, positions row-major.
pub fn im2col(spec: &LayerSpec, batch: &Matrix) -> Matrix {
    let LayerSpec::Conv2d {
        in_channels,
        height,
        width,
        kernel_h,
        kernel_w,
        stride,
        ..
    } = *spec
    else {
        return batch.clone();
    };
    let (oh, ow) = spec.output_hw();
    let p = oh * ow;
    let b = batch.cols();
    let k = in_channels * kernel_h * kernel_w;
    let mut out = Matrix::zeros(k, b * p);
    let cols = b * p;
    let data = out.as_mut_slice();
    for s in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = s * p + oy * ow + ox;
                for c in 0..in_channels {
                    for ky in 0..kernel_h {
                        for kx in 0..kernel_w {
                            let row = (c * kernel_h + ky) * kernel_w + kx;
                            let src = c * height * width + (oy * stride + ky) * width + ox * stride + kx;
                            data[row * cols + col] = batch.get(src, s);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the input.
fn col2im(spec: &LayerSpec, patches: &Matrix, b: usize) -> Matrix {
    let LayerSpec::Conv2d {
        in_channels,
        height,
        width,
        kernel_h,
        kernel_w,
        stride,
        ..
    } = *spec
    else {
        return patches.clone();
    };
    let (oh, ow) = spec.output_hw();
    let p = oh * ow;
    let mut out = Matrix::zeros(in_channels * height * width, b);
    for s in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = s * p + oy * ow + ox;
                for c in 0..in_channels {
                    for ky in 0..kernel_h {
                        for kx in 0..kernel_w {
                            let row = (c * kernel_h + ky) * kernel_w + kx;
                            let dst = c * height * width + (oy * stride + ky) * width + ox * stride + kx;
                            let v = out.get(dst, s) + patches.get(row, col);
                            out.set(dst, s, v);
                        }
                    }
                }
            }
        }
    }
    out
}

/// `out_ch × B·P` → `out_ch·P × B` (channel-major per sample).
fn conv_to_samples(spec: &LayerSpec, z: &Matrix, b: usize) -> Matrix {
    let (oh, ow) = spec.output_hw();
    let p = oh * ow;
    let oc = z.rows();
    Matrix::from_fn(oc * p, b, |r, s| z.get(r / p, s * p + r % p))
}

/// Inverse of [`conv_to_samples`].
fn samples_to_conv(spec: &LayerSpec, x: &Matrix) -> Matrix {
    let (oh, ow) = spec.output_hw();
    let p = oh * ow;
    let b = x.cols();
    let oc = x.rows() / p;
    Matrix::from_fn(oc, b * p, |o, col| x.get(o * p + col % p, col / p))
}

/// Representation matrix for one layer: the captured input columns, thinned
/// to at most `max_cols` by an even deterministic stride.
pub fn build_representation_matrix(acts: &LayerActivations, layer: usize, max_cols: usize) -> Result<Matrix> {
    let m = acts.layers.get(layer).ok_or(Error::EmptyRepresentation(layer))?;
    if m.cols() == 0 || max_cols == 0 {
        return Err(Error::EmptyRepresentation(layer));
    }
    if m.cols() <= max_cols {
        return Ok(m.clone());
    }
    let n = m.cols();
    let idx: Vec<usize> = (0..max_cols).map(|i| i * n / max_cols).collect();
    Ok(m.select_columns(&idx))
}

/// Stacks sample vectors as the columns of a batch matrix.
pub fn batch_from_samples(samples: &[&[f64]]) -> Result<Matrix> {
    let rows = samples.first().map(|s| s.len()).unwrap_or(0);
    let cols = samples.len();
    let mut data = vec![0.0; rows * cols];
    for (c, s) in samples.iter().enumerate() {
        if s.len() != rows {
            return Err(Error::Dimension {
                op: "batch_from_samples",
                lhs: (rows, cols),
                rhs: (s.len(), 1),
            });
        }
        for (r, v) in s.iter().enumerate() {
            data[r * cols + c] = *v;
        }
    }
    Matrix::new(rows, cols, data)
}
