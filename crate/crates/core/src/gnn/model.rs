use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{ChebLayer, LayerGrad};
use super::{Activation, Architecture, GnnError, ModelRole};
use crate::graph::SpectralOperator;

/// Global z-score statistics; every junction and timestep shares one mean and std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean: 0.0, std: 1.0 };

    /// Population mean and std of `values`; a std below `1e-12` becomes 1.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return Self::IDENTITY;
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        Normalization {
            mean,
            std: if std < 1e-12 { 1.0 } else { std },
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebNetModel {
    pub role: ModelRole,
    /// Past snapshots seen by a predictor; 0 for a reconstructor.
    pub window: usize,
    pub arch: Architecture,
    pub normalization: Normalization,
    pub layers: Vec<ChebLayer>,
    pub config_hash: Option<String>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Normalized output, `(n·B) × 1`.
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub layers: Vec<LayerGrad>,
}

impl ModelGrad {
    pub fn zeros_like(model: &ChebNetModel) -> Self {
        ModelGrad {
            layers: model.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().for_each(|l| l.scale(c));
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            for t in &l.theta {
                v.extend(t.iter());
            }
            v.extend(l.bias.iter());
        }
        v
    }
}

/// Mean squared error over all entries and its gradient w.r.t. `output`.
pub fn squared_error(output: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let count = output.len().max(1) as f64;
    let diff = &output - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    (loss, diff * (2.0 / count))
}

impl ChebNetModel {
    pub fn in_channels(role: ModelRole, window: usize) -> usize {
        match role {
            ModelRole::Reconstructor => 2,
            ModelRole::Predictor => window + 1,
        }
    }

    fn check_role(role: ModelRole, window: usize) -> Result<(), GnnError> {
        match (role, window) {
            (ModelRole::Predictor, 0) => Err(GnnError::InvalidArchitecture("predictor window must be positive".into())),
            (ModelRole::Reconstructor, w) if w != 0 => Err(GnnError::InvalidArchitecture(
                "reconstructor takes no window".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Glorot-initialized model seeded by `seed`.
    pub fn new(
        role: ModelRole,
        window: usize,
        arch: &Architecture,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self, GnnError> {
        arch.validate()?;
        Self::check_role(role, window)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.layer_shapes(Self::in_channels(role, window));
        let last = shapes.len() - 1;
        let layers = shapes
            .iter()
            .zip(&arch.orders)
            .enumerate()
            .map(|(i, (&(fi, fo), &k))| {
                let act = if i == last { Activation::Identity } else { arch.activation };
                ChebLayer::glorot(k, fi, fo, act, &mut rng)
            })
            .collect();
        Ok(ChebNetModel {
            role,
            window,
            arch: arch.clone(),
            normalization,
            layers,
            config_hash: None,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(
        role: ModelRole,
        window: usize,
        arch: &Architecture,
        normalization: Normalization,
    ) -> Result<Self, GnnError> {
        let mut m = Self::new(role, window, arch, normalization, 0)?;
        for l in &mut m.layers {
            *l = ChebLayer::zeros(l.order(), l.f_in(), l.f_out(), l.activation);
        }
        Ok(m)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(ChebLayer::n_params).sum()
    }

    fn check_input(&self, op: &SpectralOperator, x: &ArrayView2<f64>) -> Result<(), GnnError> {
        let f_in = self.layers[0].f_in();
        if x.ncols() != f_in {
            return Err(GnnError::DimensionMismatch {
                expected: f_in,
                found: x.ncols(),
            });
        }
        if x.nrows() == 0 || x.nrows() % op.n() != 0 {
            return Err(GnnError::DimensionMismatch {
                expected: op.n(),
                found: x.nrows(),
            });
        }
        Ok(())
    }

    /// Normalized forward pass over a node-major batch.
    pub fn forward_batch(&self, op: &SpectralOperator, x: ArrayView2<f64>) -> Result<ForwardCache, GnnError> {
        self.check_input(op, &x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.as_standard_layout().into_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.pre_activation(op.l_hat(), h.view());
            if z.iter().any(|v| !v.is_finite()) {
                return Err(GnnError::NonFiniteActivation { layer: i });
            }
            let act = layer.activation;
            let next = z.mapv(|v| act.apply(v));
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: h,
        })
    }

    /// Parameter gradients given `d_out`, the loss gradient w.r.t. the normalized output.
    pub fn backward_batch(&self, op: &SpectralOperator, cache: &ForwardCache, d_out: ArrayView2<f64>) -> ModelGrad {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            if act != Activation::Identity {
                ndarray::Zip::from(&mut d)
                    .and(&cache.pre[i])
                    .for_each(|g, &z| *g *= act.derivative(z));
            }
            let (g, dx) = layer.backward(op.l_hat(), cache.inputs[i].view(), d.view(), i > 0);
            grads.push(g);
            if let Some(dx) = dx {
                d = dx;
            }
        }
        grads.reverse();
        ModelGrad { layers: grads }
    }

    /// Estimates one pressure vector (physical units) from an `n × F_in` encoded input.
    pub fn forward(&self, op: &SpectralOperator, input: ArrayView2<f64>) -> Result<Array1<f64>, GnnError> {
        if input.nrows() != op.n() {
            return Err(GnnError::DimensionMismatch {
                expected: op.n(),
                found: input.nrows(),
            });
        }
        let out = self.forward_batch(op, input)?.output;
        Ok(out.column(0).mapv(|z| self.normalization.denormalize(z)))
    }

    pub fn to_json(&self) -> Result<String, GnnError> {
        Ok(serde_json::to_string_pretty(&Checkpoint::from(self))? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, GnnError> {
        let doc: Checkpoint = serde_json::from_str(text)?;
        doc.into_model()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_json().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GnnError::InvalidTraining(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    #[serde(rename = "Theta")]
    theta: Vec<Vec<Vec<f64>>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    role: ModelRole,
    w: Option<usize>,
    arch: Architecture,
    normalization: Normalization,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl From<&ChebNetModel> for Checkpoint {
    fn from(m: &ChebNetModel) -> Self {
        Checkpoint {
            role: m.role,
            w: (m.role == ModelRole::Predictor).then_some(m.window),
            arch: m.arch.clone(),
            normalization: m.normalization,
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    theta: l
                        .theta
                        .iter()
                        .map(|t| t.rows().into_iter().map(|r| r.to_vec()).collect())
                        .collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            config_hash: m.config_hash.clone(),
        }
    }
}

impl Checkpoint {
    fn into_model(self) -> Result<ChebNetModel, GnnError> {
        let window = self.w.unwrap_or(0);
        let mut model = ChebNetModel::zeros(self.role, window, &self.arch, self.normalization)?;
        if self.layers.len() != model.layers.len() {
            return Err(GnnError::DimensionMismatch {
                expected: model.layers.len(),
                found: self.layers.len(),
            });
        }
        for (layer, doc) in model.layers.iter_mut().zip(self.layers) {
            if doc.theta.len() != layer.theta.len() {
                return Err(GnnError::DimensionMismatch {
                    expected: layer.theta.len(),
                    found: doc.theta.len(),
                });
            }
            let (fi, fo) = (layer.f_in(), layer.f_out());
            for (t, rows) in layer.theta.iter_mut().zip(doc.theta) {
                if rows.len() != fi || rows.iter().any(|r| r.len() != fo) {
                    return Err(GnnError::InvalidArchitecture(format!(
                        "weight matrix is not {fi}x{fo}"
                    )));
                }
                *t = Array2::from_shape_vec((fi, fo), rows.concat()).expect("shape checked");
            }
            if doc.bias.len() != fo {
                return Err(GnnError::DimensionMismatch {
                    expected: fo,
                    found: doc.bias.len(),
                });
            }
            layer.bias = Array1::from(doc.bias);
        }
        model.config_hash = self.config_hash;
        Ok(model)
    }
}
