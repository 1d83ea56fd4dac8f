//! Small fully-connected classifiers: init, forward, cross-entropy
//! gradients, SGD. Everything is a pure function over `f64` values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of an MLP classifier: affine+ReLU hidden layers followed by
/// an affine classifier head with softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Which hidden layer counts as the domain feature extractor.
    #[serde(default)]
    pub domain_layer_index: usize,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
            domain_layer_index: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "hidden_dims must be positive, got {:?}",
                self.hidden_dims
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.domain_layer_index >= self.hidden_dims.len() {
            return Err(Error::InvalidConfig(format!(
                "domain_layer_index {} out of range for {} hidden layers",
                self.domain_layer_index,
                self.hidden_dims.len()
            )));
        }
        Ok(())
    }

    /// Layer widths from input to output: `[input, hidden..., classes]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Shape `[fan_in, fan_out]`.
    pub weight: Tensor,
    /// Shape `[fan_out]`.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn from_layers(spec: ModelSpec, layers: Vec<LayerParams>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        if layers.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {}",
                dims.len() - 1,
                layers.len()
            )));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.weight.shape() != [dims[k], dims[k + 1]] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} weight shape {:?}, expected [{}, {}]",
                    layer.weight.shape(),
                    dims[k],
                    dims[k + 1]
                )));
            }
            if layer.bias.shape() != [dims[k + 1]] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} bias shape {:?}, expected [{}]",
                    layer.bias.shape(),
                    dims[k + 1]
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    /// The classifier head's weight matrix, shape `[R, C]`.
    pub fn classifier_weight(&self) -> &Tensor {
        &self.layers[self.layers.len() - 1].weight
    }

    /// The designated domain layer's weight matrix (bias excluded by design).
    pub fn domain_layer_weight(&self) -> &Tensor {
        &self.layers[self.spec.domain_layer_index].weight
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.same_shape(&b.weight) && a.bias.same_shape(&b.bias))
    }
}

/// Per-layer gradients, shape-parallel to `ModelParams::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: Tensor::zeros(l.weight.shape().to_vec()),
                bias: Tensor::zeros(l.bias.shape().to_vec()),
            })
            .collect();
        Self { layers }
    }

    /// `self += scale * other`, used to fold in scaled penalty gradients.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer count".into()));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            if !dst.weight.same_shape(&src.weight) || !dst.bias.same_shape(&src.bias) {
                return Err(Error::ShapeMismatch("gradient layer shape".into()));
            }
            for (d, s) in dst.weight.data_mut().iter_mut().zip(src.weight.data()) {
                *d += scale * s;
            }
            for (d, s) in dst.bias.data_mut().iter_mut().zip(src.bias.data()) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.layers {
            for x in layer.weight.data_mut() {
                *x *= s;
            }
            for x in layer.bias.data_mut() {
                *x *= s;
            }
        }
    }
}

/// Initializes an MLP with weights drawn uniformly from
/// `(-1/sqrt(fan_in), 1/sqrt(fan_in))` and zero biases. Fully determined by
/// `seed`.
pub fn mlp_init(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.dims();
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for k in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[k], dims[k + 1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        layers.push(LayerParams {
            weight: Tensor::new(vec![fan_in, fan_out], data)?,
            bias: Tensor::zeros(vec![fan_out]),
        });
    }
    Ok(ModelParams {
        spec: spec.clone(),
        layers,
    })
}

/// `x @ w + b` for `x: [B, fan_in]`, `w: [fan_in, fan_out]`, `b: [fan_out]`.
fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (rows, inner) = (x.shape()[0], x.shape()[1]);
    let out = w.shape()[1];
    debug_assert_eq!(w.shape()[0], inner);
    let mut data = vec![0.0; rows * out];
    for r in 0..rows {
        let xrow = &x.data()[r * inner..(r + 1) * inner];
        let orow = &mut data[r * out..(r + 1) * out];
        orow.copy_from_slice(b.data());
        for (i, &xi) in xrow.iter().enumerate() {
            let wrow = &w.data()[i * out..(i + 1) * out];
            for (o, &wij) in orow.iter_mut().zip(wrow) {
                *o += xi * wij;
            }
        }
    }
    Tensor::new(vec![rows, out], data).expect("affine output shape")
}

fn relu_inplace(t: &mut Tensor) {
    for x in t.data_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Row-wise softmax with max subtraction for overflow safety.
fn softmax_rows(logits: &Tensor) -> Tensor {
    let (rows, cols) = (logits.shape()[0], logits.shape()[1]);
    let mut data = logits.data().to_vec();
    for r in 0..rows {
        let row = &mut data[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    Tensor::new(vec![rows, cols], data).expect("softmax output shape")
}

/// All layer outputs: post-ReLU hidden activations, then softmax probs last.
fn forward_cached(params: &ModelParams, batch: &Tensor) -> Result<Vec<Tensor>> {
    let (_, width) = batch.dims2()?;
    if width != params.spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "batch width {width}, model input_dim {}",
            params.spec.input_dim
        )));
    }
    let n_layers = params.layers.len();
    let mut outs = Vec::with_capacity(n_layers);
    let mut cur = batch;
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = affine(cur, &layer.weight, &layer.bias);
        if k + 1 < n_layers {
            relu_inplace(&mut z);
        } else {
            z.check_finite("logits")?;
            z = softmax_rows(&z);
        }
        outs.push(z);
        cur = outs.last().expect("just pushed");
    }
    Ok(outs)
}

/// Softmax class probabilities for a batch, shape `[B, num_classes]`.
pub fn forward(params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    let mut outs = forward_cached(params, batch)?;
    Ok(outs.pop().expect("at least one layer"))
}

/// Class-weighted cross-entropy over a batch, summed (not averaged), with
/// its exact analytic gradients. Probabilities are clamped at `LOG_CLAMP`
/// before the log.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &Tensor,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Gradients)> {
    let c = params.spec.num_classes;
    let (b, _) = batch.dims2()?;
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "batch of {b} rows with {} labels",
            labels.len()
        )));
    }
    if class_weights.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "{} class weights for {c} classes",
            class_weights.len()
        )));
    }
    if let Some(&w) = class_weights.iter().find(|w| !w.is_finite() || **w < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "class weights must be finite and at least 1, got {w}"
        )));
    }
    for &y in labels {
        if y >= c {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: c,
            });
        }
    }

    let outs = forward_cached(params, batch)?;
    let probs = outs.last().expect("at least one layer");

    let mut loss = 0.0;
    // dL/dlogits; zero rows where the clamp kicked in (loss locally constant).
    let mut dlogits = vec![0.0; b * c];
    for (j, &y) in labels.iter().enumerate() {
        let p = probs.data()[j * c + y];
        let w = class_weights[y];
        loss += w * -(p.max(LOG_CLAMP)).ln();
        if p >= LOG_CLAMP {
            let row = &mut dlogits[j * c..(j + 1) * c];
            for (m, g) in row.iter_mut().enumerate() {
                *g = w * (probs.data()[j * c + m] - if m == y { 1.0 } else { 0.0 });
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss {loss}")));
    }

    // Backward pass, layer by layer from the head.
    let n_layers = params.layers.len();
    let mut grads = Gradients::zeros_like(params);
    let mut delta = dlogits; // dL/d(pre-activation or logits) of current layer
    for k in (0..n_layers).rev() {
        let input: &Tensor = if k == 0 { batch } else { &outs[k - 1] };
        let (fan_in, fan_out) = params.layers[k].weight.dims2()?;
        // dW = input^T @ delta, db = column sums of delta.
        {
            let gl = &mut grads.layers[k];
            let gw = gl.weight.data_mut();
            for j in 0..b {
                let xrow = &input.data()[j * fan_in..(j + 1) * fan_in];
                let drow = &delta[j * fan_out..(j + 1) * fan_out];
                for (i, &xi) in xrow.iter().enumerate() {
                    let grow = &mut gw[i * fan_out..(i + 1) * fan_out];
                    for (g, &d) in grow.iter_mut().zip(drow) {
                        *g += xi * d;
                    }
                }
            }
            let gb = gl.bias.data_mut();
            for j in 0..b {
                let drow = &delta[j * fan_out..(j + 1) * fan_out];
                for (g, &d) in gb.iter_mut().zip(drow) {
                    *g += d;
                }
            }
        }
        if k == 0 {
            break;
        }
        // delta_prev = (delta @ W^T) masked by ReLU activity of layer k-1.
        let w = &params.layers[k].weight;
        let act = &outs[k - 1];
        let mut prev = vec![0.0; b * fan_in];
        for j in 0..b {
            let drow = &delta[j * fan_out..(j + 1) * fan_out];
            let arow = &act.data()[j * fan_in..(j + 1) * fan_in];
            let prow = &mut prev[j * fan_in..(j + 1) * fan_in];
            for i in 0..fan_in {
                if arow[i] > 0.0 {
                    let wrow = &w.data()[i * fan_out..(i + 1) * fan_out];
                    prow[i] = drow.iter().zip(wrow).map(|(&d, &wv)| d * wv).sum();
                }
            }
        }
        delta = prev;
    }
    Ok((loss, grads))
}

/// One gradient-descent step: every parameter becomes `p - lr * g`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    if params.layers.len() != grads.layers.len() {
        return Err(Error::ShapeMismatch("gradient layer count".into()));
    }
    let mut out = params.clone();
    for (dst, (src, g)) in out
        .layers
        .iter_mut()
        .zip(params.layers.iter().zip(&grads.layers))
    {
        if !src.weight.same_shape(&g.weight) || !src.bias.same_shape(&g.bias) {
            return Err(Error::ShapeMismatch("gradient layer shape".into()));
        }
        g.weight.check_finite("weight gradient")?;
        g.bias.check_finite("bias gradient")?;
        for (d, (&p, &gv)) in dst
            .weight
            .data_mut()
            .iter_mut()
            .zip(src.weight.data().iter().zip(g.weight.data()))
        {
            *d = p - lr * gv;
        }
        for (d, (&p, &gv)) in dst
            .bias
            .data_mut()
            .iter_mut()
            .zip(src.bias.data().iter().zip(g.bias.data()))
        {
            *d = p - lr * gv;
        }
    }
    Ok(out)
}
