use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{squared_error, ChebNetModel, ModelGrad, Normalization};
use super::{Architecture, GnnError, ModelRole};
use crate::graph::SpectralOperator;

/// Row ranges of the pressure matrix used for fitting and model selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Every `train_stride`-th training target enters the full batch.
    #[serde(default = "defaults::one")]
    pub train_stride: usize,
    /// Every `eval_stride`-th validation target is scored each epoch.
    #[serde(default = "defaults::one")]
    pub eval_stride: usize,
    /// Samples per forward/backward pass while accumulating the full-batch gradient.
    #[serde(default = "defaults::chunk_size")]
    pub chunk_size: usize,
    /// Samples per optimizer step, reshuffled every epoch; `None` is full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

mod defaults {
    pub fn epochs() -> usize {
        500
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn one() -> usize {
        1
    }
    pub fn chunk_size() -> usize {
        256
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: defaults::epochs(),
            learning_rate: defaults::learning_rate(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            adam_eps: defaults::adam_eps(),
            seed: 0,
            train_stride: 1,
            eval_stride: 1,
            chunk_size: defaults::chunk_size(),
            batch_size: None,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidTraining(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning rate and adam epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.train_stride == 0 || self.eval_stride == 0 || self.chunk_size == 0 || self.batch_size == Some(0) {
            return bad("strides and chunk size must be positive");
        }
        Ok(())
    }
}

/// Loss histories (normalized MSE per epoch) and the selected checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub config: TrainingConfig,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub optimizer_steps: usize,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Mean squared error in z-scored and in physical (m²) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mse {
    pub normalized: f64,
    pub physical: f64,
}

struct Adam {
    m: ModelGrad,
    v: ModelGrad,
    t: i32,
}

impl Adam {
    fn new(model: &ChebNetModel) -> Self {
        Adam {
            m: ModelGrad::zeros_like(model),
            v: ModelGrad::zeros_like(model),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut ChebNetModel, grad: &ModelGrad, cfg: &TrainingConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (ml, vl, gl) = (&mut self.m.layers[li], &mut self.v.layers[li], &grad.layers[li]);
            for k in 0..layer.theta.len() {
                ndarray::Zip::from(&mut layer.theta[k])
                    .and(&gl.theta[k])
                    .and(&mut ml.theta[k])
                    .and(&mut vl.theta[k])
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
            ndarray::Zip::from(&mut layer.bias)
                .and(&gl.bias)
                .and(&mut ml.bias)
                .and(&mut vl.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

fn check_mask(z: &ArrayView2<f64>, mask: &[u8]) -> Result<(), GnnError> {
    if z.ncols() != mask.len() {
        return Err(GnnError::DimensionMismatch {
            expected: z.ncols(),
            found: mask.len(),
        });
    }
    Ok(())
}

/// Node-major reconstructor batch for the given rows of normalized pressures `z`.
///
/// Channel 0 is the masked pressure and channel 1 the mask. The target holds
/// the full normalized snapshot.
pub fn encode_reconstructor_batch(
    z: ArrayView2<f64>,
    mask: &[u8],
    rows: &[usize],
) -> Result<(Array2<f64>, Array2<f64>), GnnError> {
    check_mask(&z, mask)?;
    let n = mask.len();
    let b = rows.len();
    let mut x = Array2::zeros((n * b, 2));
    let mut y = Array2::zeros((n * b, 1));
    for i in 0..n {
        let sensed = mask[i] != 0;
        for (j, &t) in rows.iter().enumerate() {
            let r = i * b + j;
            let v = z[[t, i]];
            if sensed {
                x[[r, 0]] = v;
                x[[r, 1]] = 1.0;
            }
            y[[r, 0]] = v;
        }
    }
    Ok((x, y))
}

/// Node-major predictor batch: channels `0..w` are masked snapshots
/// `t-w .. t-1` (oldest first), channel `w` is the mask, and the target is row `t`.
pub fn encode_predictor_batch(
    z: ArrayView2<f64>,
    mask: &[u8],
    window: usize,
    targets: &[usize],
) -> Result<(Array2<f64>, Array2<f64>), GnnError> {
    check_mask(&z, mask)?;
    if let Some(&t) = targets.iter().find(|&&t| t < window || t >= z.nrows()) {
        return Err(GnnError::WindowTooLong {
            window,
            rows: t.min(z.nrows()),
        });
    }
    let n = mask.len();
    let b = targets.len();
    let mut x = Array2::zeros((n * b, window + 1));
    let mut y = Array2::zeros((n * b, 1));
    for i in 0..n {
        let sensed = mask[i] != 0;
        for (j, &t) in targets.iter().enumerate() {
            let r = i * b + j;
            if sensed {
                for c in 0..window {
                    x[[r, c]] = z[[t - window + c, i]];
                }
                x[[r, window]] = 1.0;
            }
            y[[r, 0]] = z[[t, i]];
        }
    }
    Ok((x, y))
}

fn encode(
    model_role: ModelRole,
    window: usize,
    z: ArrayView2<f64>,
    mask: &[u8],
    targets: &[usize],
) -> Result<(Array2<f64>, Array2<f64>), GnnError> {
    match model_role {
        ModelRole::Reconstructor => encode_reconstructor_batch(z, mask, targets),
        ModelRole::Predictor => encode_predictor_batch(z, mask, window, targets),
    }
}

fn targets(range: &Range<usize>, window: usize, stride: usize) -> Vec<usize> {
    (range.start.max(window)..range.end).step_by(stride).collect()
}

struct Batches {
    chunks: Vec<(Array2<f64>, Array2<f64>, usize)>,
    samples: usize,
}

impl Batches {
    fn build(
        role: ModelRole,
        window: usize,
        z: ArrayView2<f64>,
        mask: &[u8],
        targets: &[usize],
        chunk: usize,
    ) -> Result<Self, GnnError> {
        let chunks = targets
            .chunks(chunk)
            .map(|c| encode(role, window, z, mask, c).map(|(x, y)| (x, y, c.len())))
            .collect::<Result<_, _>>()?;
        Ok(Batches {
            chunks,
            samples: targets.len(),
        })
    }

    fn loss(&self, model: &ChebNetModel, op: &SpectralOperator) -> Result<f64, GnnError> {
        let mut total = 0.0;
        for (x, y, b) in &self.chunks {
            let out = model.forward_batch(op, x.view())?.output;
            let (loss, _) = squared_error(out.view(), y.view());
            total += loss * *b as f64;
        }
        Ok(total / self.samples as f64)
    }

    fn loss_and_grad(&self, model: &ChebNetModel, op: &SpectralOperator) -> Result<(f64, ModelGrad), GnnError> {
        let mut grad = ModelGrad::zeros_like(model);
        let mut total = 0.0;
        for (x, y, b) in &self.chunks {
            let weight = *b as f64 / self.samples as f64;
            let cache = model.forward_batch(op, x.view())?;
            let (loss, mut d) = squared_error(cache.output.view(), y.view());
            d *= weight;
            grad.add_assign(&model.backward_batch(op, &cache, d.view()));
            total += loss * weight;
        }
        Ok((total, grad))
    }
}

#[allow(clippy::too_many_arguments)]
fn train(
    role: ModelRole,
    window: usize,
    pressures: ArrayView2<f64>,
    mask: &[u8],
    op: &SpectralOperator,
    arch: &Architecture,
    split: &Split,
    cfg: &TrainingConfig,
) -> Result<(ChebNetModel, TrainingRun), GnnError> {
    cfg.validate()?;
    if pressures.ncols() != op.n() {
        return Err(GnnError::DimensionMismatch {
            expected: op.n(),
            found: pressures.ncols(),
        });
    }
    let rows = pressures.nrows();
    for r in [&split.train, &split.val] {
        if r.start >= r.end || r.end > rows {
            return Err(GnnError::InvalidTraining(format!(
                "split rows {r:?} invalid for {rows} rows"
            )));
        }
    }
    if role == ModelRole::Predictor && (window >= split.train.end || window >= split.val.end) {
        return Err(GnnError::WindowTooLong {
            window,
            rows: split.train.end.min(split.val.end),
        });
    }

    let norm = Normalization::fit(pressures.slice(ndarray::s![split.train.clone(), ..]).iter());
    let z = pressures.mapv(|v| norm.normalize(v));
    let train_targets = targets(&split.train, window, cfg.train_stride);
    let val_targets = targets(&split.val, window, cfg.eval_stride);
    let full_batch = cfg.batch_size.is_none_or(|bs| bs >= train_targets.len());
    let train_set = if full_batch {
        Batches::build(role, window, z.view(), mask, &train_targets, cfg.chunk_size)?
    } else {
        Batches {
            chunks: Vec::new(),
            samples: train_targets.len(),
        }
    };
    let val_set = Batches::build(role, window, z.view(), mask, &val_targets, cfg.chunk_size)?;

    let mut model = ChebNetModel::new(role, window, arch, norm, cfg.seed)?;
    let mut adam = Adam::new(&model);
    let mut best = model.clone();
    let mut run = TrainingRun {
        config: cfg.clone(),
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        optimizer_steps: 0,
        train_samples: train_set.samples,
        val_samples: val_set.samples,
    };
    let diverged = |epoch| move |e: GnnError| match e {
        GnnError::NonFiniteActivation { .. } => GnnError::Divergence { epoch },
        other => other,
    };
    let mut order = train_targets.clone();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    for epoch in 0..cfg.epochs {
        let train_loss = match cfg.batch_size {
            Some(bs) if bs < order.len() => {
                order.shuffle(&mut shuffle_rng);
                let mut total = 0.0;
                for batch in order.chunks(bs) {
                    let set = Batches::build(role, window, z.view(), mask, batch, cfg.chunk_size)?;
                    let (loss, grad) = set.loss_and_grad(&model, op).map_err(diverged(epoch))?;
                    adam.step(&mut model, &grad, cfg);
                    run.optimizer_steps += 1;
                    total += loss * batch.len() as f64;
                }
                total / order.len() as f64
            }
            _ => {
                let (loss, grad) = train_set.loss_and_grad(&model, op).map_err(diverged(epoch))?;
                adam.step(&mut model, &grad, cfg);
                run.optimizer_steps += 1;
                loss
            }
        };
        let val_loss = val_set.loss(&model, op).map_err(diverged(epoch))?;
        if !val_loss.is_finite() {
            return Err(GnnError::Divergence { epoch });
        }
        run.train_loss.push(train_loss);
        run.val_loss.push(val_loss);
        if val_loss < run.best_val_loss {
            run.best_val_loss = val_loss;
            run.best_epoch = epoch;
            best.clone_from(&model);
        }
    }
    Ok((best, run))
}

/// Fits a static estimator of the full snapshot from its masked version.
pub fn train_reconstructor(
    pressures: ArrayView2<f64>,
    mask: &[u8],
    op: &SpectralOperator,
    arch: &Architecture,
    split: &Split,
    cfg: &TrainingConfig,
) -> Result<(ChebNetModel, TrainingRun), GnnError> {
    train(ModelRole::Reconstructor, 0, pressures, mask, op, arch, split, cfg)
}

/// Fits a one-step predictor of the full snapshot from `window` past masked snapshots.
pub fn train_predictor(
    pressures: ArrayView2<f64>,
    mask: &[u8],
    op: &SpectralOperator,
    arch: &Architecture,
    window: usize,
    split: &Split,
    cfg: &TrainingConfig,
) -> Result<(ChebNetModel, TrainingRun), GnnError> {
    if window == 0 {
        return Err(GnnError::InvalidArchitecture("predictor window must be positive".into()));
    }
    train(ModelRole::Predictor, window, pressures, mask, op, arch, split, cfg)
}

/// MSE of `model` over target rows `range` (every `stride`-th) of physical pressures.
pub fn evaluate(
    model: &ChebNetModel,
    op: &SpectralOperator,
    pressures: ArrayView2<f64>,
    mask: &[u8],
    range: Range<usize>,
    stride: usize,
) -> Result<Mse, GnnError> {
    let norm = model.normalization;
    let z = pressures.mapv(|v| norm.normalize(v));
    let t = targets(&range, model.window, stride.max(1));
    if t.is_empty() {
        return Err(GnnError::WindowTooLong {
            window: model.window,
            rows: range.end,
        });
    }
    let set = Batches::build(model.role, model.window, z.view(), mask, &t, 256)?;
    let normalized = set.loss(model, op)?;
    Ok(Mse {
        normalized,
        physical: normalized * norm.std * norm.std,
    })
}

/// Physical-unit estimates for every row a model can score.
///
/// A reconstructor yields all `T` rows; a predictor yields rows `w..T`, so row
/// `r` of its output estimates pressure row `r + w`.
pub fn predict_series(
    model: &ChebNetModel,
    op: &SpectralOperator,
    pressures: ArrayView2<f64>,
    mask: &[u8],
) -> Result<Array2<f64>, GnnError> {
    let n = op.n();
    let norm = model.normalization;
    let z = pressures.mapv(|v| norm.normalize(v));
    let t = targets(&(0..pressures.nrows()), model.window, 1);
    let mut out = Array2::zeros((t.len(), n));
    let mut row = 0;
    for chunk in t.chunks(256) {
        let (x, _) = encode(model.role, model.window, z.view(), mask, chunk)?;
        let y = model.forward_batch(op, x.view())?.output;
        let b = chunk.len();
        for i in 0..n {
            for j in 0..b {
                out[[row + j, i]] = norm.denormalize(y[[i * b + j, 0]]);
            }
        }
        row += b;
    }
    debug_assert_eq!(out.len_of(Axis(0)), row);
    Ok(out)
}
