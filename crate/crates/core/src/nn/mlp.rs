use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2D;
use crate::error::{usage, Error, Result};

/// Stabilizer added to the squared norm inside the square root of the
/// power-normalization layer during training.
pub const POWER_NORM_EPS: f64 = 1e-12;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
    /// Scales each row to squared norm `dim * power`, where `dim` is the layer width.
    PowerNorm { power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayerRecord", try_from = "LayerRecord")]
pub struct DenseLayer {
    /// `inputs x outputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// On-disk form of a layer: dims, activation tag, row-major weights, biases.
#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<DenseLayer> for LayerRecord {
    fn from(l: DenseLayer) -> Self {
        let (inputs, outputs) = l.weights.dim();
        LayerRecord {
            inputs,
            outputs,
            activation: l.activation,
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        }
    }
}

impl TryFrom<LayerRecord> for DenseLayer {
    type Error = String;

    fn try_from(r: LayerRecord) -> std::result::Result<Self, String> {
        if r.bias.len() != r.outputs {
            return Err(format!("bias length {} != outputs {}", r.bias.len(), r.outputs));
        }
        let weights = Array2::from_shape_vec((r.inputs, r.outputs), r.weights)
            .map_err(|e| format!("weight shape: {e}"))?;
        Ok(DenseLayer { weights, bias: Array1::from(r.bias), activation: r.activation })
    }
}

impl DenseLayer {
    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-limit..limit));
        DenseLayer { weights, bias: Array1::zeros(outputs), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    stamp: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    layers: Vec<DenseLayer>,
}

impl From<MlpModel> for ModelRecord {
    fn from(m: MlpModel) -> Self {
        ModelRecord { layers: m.layers }
    }
}

impl TryFrom<ModelRecord> for MlpModel {
    type Error = String;

    fn try_from(r: ModelRecord) -> std::result::Result<Self, String> {
        MlpModel::from_layers(r.layers).map_err(|e| e.to_string())
    }
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Intermediate values from [`MlpModel::forward`], consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    input: Tensor2D,
    pre: Vec<Tensor2D>,
    post: Vec<Tensor2D>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor2D {
        self.post.last().expect("model has layers")
    }

    /// Pre-activation values of the final layer.
    pub fn logits(&self) -> &Tensor2D {
        self.pre.last().expect("model has layers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.bias.iter_mut().for_each(|b| *b *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.bias.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.bias.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpModel {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(usage!("a model needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(usage!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                ));
            }
        }
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if i != last && matches!(l.activation, Activation::Softmax | Activation::PowerNorm { .. }) {
                return Err(usage!("layer {i}: softmax and power_norm are only allowed on the final layer"));
            }
            if let Activation::PowerNorm { power } = l.activation {
                if !(power >= 0.0 && power.is_finite()) {
                    return Err(usage!("power_norm power must be finite and non-negative, got {power}"));
                }
            }
        }
        Ok(MlpModel { layers, stamp: fresh_stamp() })
    }

    /// `input -> hidden[0] -> ... -> output` with ReLU hidden layers.
    pub fn dense<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        if dims.iter().any(|&d| d == 0) {
            return Err(usage!("layer widths must be positive: {dims:?}"));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { Activation::Relu };
                DenseLayer::init(dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().unwrap().activation
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Mutable access to parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.stamp = fresh_stamp();
        &mut self.layers
    }

    fn check_input(&self, input: &Tensor2D) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(usage!("input has {} columns, model expects {}", input.ncols(), self.input_dim()));
        }
        Ok(())
    }

    /// Training-path forward pass. Power normalization uses the stabilized
    /// norm `sqrt(|x|^2 + POWER_NORM_EPS)`.
    pub fn forward(&self, input: &Tensor2D) -> Result<(Tensor2D, ForwardCache)> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Tensor2D> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().unwrap_or(input);
            let z = x.dot(&layer.weights) + &layer.bias;
            let a = apply_activation(layer.activation, &z, POWER_NORM_EPS)?;
            pre.push(z);
            post.push(a);
        }
        let out = post.last().unwrap().clone();
        Ok((out, ForwardCache { stamp: self.stamp, input: input.clone(), pre, post }))
    }

    /// Inference pass: exact power normalization, zero rows are an error.
    pub fn infer(&self, input: &Tensor2D) -> Result<Tensor2D> {
        self.check_input(input)?;
        let mut x = input.dot(&self.layers[0].weights) + &self.layers[0].bias;
        x = apply_activation(self.layers[0].activation, &x, 0.0)?;
        for layer in &self.layers[1..] {
            let z = x.dot(&layer.weights) + &layer.bias;
            x = apply_activation(layer.activation, &z, 0.0)?;
        }
        Ok(x)
    }

    /// Backpropagates `grad_output = dL/d(output)` through every layer.
    /// Returns parameter gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor2D) -> Result<(Gradients, Tensor2D)> {
        self.check_cache(cache, grad_output)?;
        let last = self.layers.len() - 1;
        let dz = activation_backward(self.layers[last].activation, &cache.pre[last], &cache.post[last], grad_output);
        Ok(self.backward_from(cache, dz))
    }

    /// Like [`backward`](Self::backward) but starts from the gradient with
    /// respect to the final layer's pre-activation (e.g. softmax logits).
    pub fn backward_from_logits(&self, cache: &ForwardCache, grad_logits: &Tensor2D) -> Result<(Gradients, Tensor2D)> {
        self.check_cache(cache, grad_logits)?;
        Ok(self.backward_from(cache, grad_logits.clone()))
    }

    fn check_cache(&self, cache: &ForwardCache, grad: &Tensor2D) -> Result<()> {
        if cache.stamp != self.stamp || cache.pre.len() != self.layers.len() {
            return Err(usage!("stale forward cache: parameters changed since the forward pass"));
        }
        if grad.dim() != cache.output().dim() {
            return Err(usage!("gradient shape {:?} does not match output {:?}", grad.dim(), cache.output().dim()));
        }
        Ok(())
    }

    fn backward_from(&self, cache: &ForwardCache, mut dz: Tensor2D) -> (Gradients, Tensor2D) {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let x = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            gw.push(x.t().dot(&dz));
            gb.push(dz.sum_axis(Axis(0)));
            let dx = dz.dot(&self.layers[i].weights.t());
            if i == 0 {
                dz = dx;
            } else {
                dz = activation_backward(self.layers[i - 1].activation, &cache.pre[i - 1], &cache.post[i - 1], &dx);
            }
        }
        gw.reverse();
        gb.reverse();
        (Gradients { weights: gw, bias: gb }, dz)
    }
}

fn apply_activation(act: Activation, z: &Tensor2D, eps: f64) -> Result<Tensor2D> {
    Ok(match act {
        Activation::Linear => z.clone(),
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::Softmax => {
            let mut out = z.clone();
            for mut row in out.rows_mut() {
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - m).exp());
                let s = row.sum();
                row /= s;
            }
            out
        }
        Activation::PowerNorm { power } => {
            let target = (z.ncols() as f64 * power).sqrt();
            let mut out = z.clone();
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                let sq = row.dot(&row);
                if eps == 0.0 && sq == 0.0 {
                    return Err(Error::Degenerate(format!("row {i} is the zero vector; cannot normalize power")));
                }
                row *= target / (sq + eps).sqrt();
            }
            out
        }
    })
}

/// `dL/dz` from `dL/da` for one layer.
fn activation_backward(act: Activation, z: &Tensor2D, a: &Tensor2D, grad: &Tensor2D) -> Tensor2D {
    match act {
        Activation::Linear => grad.clone(),
        Activation::Relu => {
            let mut dz = grad.clone();
            Zip::from(&mut dz).and(z).for_each(|d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            dz
        }
        Activation::Softmax => {
            let mut dz = grad.clone();
            for (mut d, p) in dz.rows_mut().into_iter().zip(a.rows()) {
                let dot = d.dot(&p);
                Zip::from(&mut d).and(&p).for_each(|dv, &pv| *dv = pv * (*dv - dot));
            }
            dz
        }
        Activation::PowerNorm { power } => {
            // a = c x / r,  r = sqrt(|x|^2 + eps):  dx = c (g / r - x (x.g) / r^3)
            let c = (z.ncols() as f64 * power).sqrt();
            let mut dz = grad.clone();
            for (mut d, x) in dz.rows_mut().into_iter().zip(z.rows()) {
                let r2 = x.dot(&x) + POWER_NORM_EPS;
                let r = r2.sqrt();
                let xg = x.dot(&d);
                Zip::from(&mut d).and(&x).for_each(|dv, &xv| *dv = c * (*dv / r - xv * xg / (r2 * r)));
            }
            dz
        }
    }
}

/// Scales `x` to squared Euclidean norm `n * power`.
pub fn power_normalize(x: ArrayView1<f64>, n: usize, power: f64) -> Result<Array1<f64>> {
    if x.len() != n {
        return Err(usage!("vector has length {}, expected {n}", x.len()));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(usage!("power must be finite and non-negative, got {power}"));
    }
    let sq = x.dot(&x);
    if sq == 0.0 {
        return Err(Error::Degenerate("cannot normalize the zero vector".into()));
    }
    Ok(&x * ((n as f64 * power).sqrt() / sq.sqrt()))
}

/// Row-wise [`power_normalize`].
pub fn power_normalize_rows(x: &Tensor2D, power: f64) -> Result<Tensor2D> {
    apply_activation(Activation::PowerNorm { power }, x, 0.0)
}
