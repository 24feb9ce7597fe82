//! ChebNet reconstructor and one-step predictor over masked junction pressures.
//!
//! Batches use a node-major layout: a batch of `B` samples with `F` channels on
//! an `n`-node graph is an `(n·B)×F` matrix whose rows `i·B..(i+1)·B` belong to
//! node `i`. Chebyshev operators then act on contiguous row blocks.

mod layer;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;

pub use layer::{ChebLayer, LayerGrad};
pub use model::{squared_error, ChebNetModel, ForwardCache, ModelGrad, Normalization};
pub use train::{
    encode_predictor_batch, encode_reconstructor_batch, evaluate, predict_series, train_predictor,
    train_reconstructor, Mse, Split, TrainingConfig, TrainingRun,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("training diverged at epoch {epoch}: validation loss is not finite")]
    Divergence { epoch: usize },
    #[error("window of {window} steps needs more than {rows} rows")]
    WindowTooLong { window: usize, rows: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training setup: {0}")]
    InvalidTraining(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Reconstructor,
    Predictor,
}

/// Chebyshev orders per layer and hidden channel widths.
///
/// `orders.len()` must equal `widths.len() + 1`; the last layer always has one
/// output channel. `activation` applies to hidden layers only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    #[serde(rename = "K")]
    pub orders: Vec<usize>,
    #[serde(rename = "F")]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn new(orders: Vec<usize>, widths: Vec<usize>) -> Self {
        Architecture {
            orders,
            widths,
            activation: Activation::Relu,
        }
    }

    /// Orders `[48, 24, 4, 1]`, widths `[24, 12, 6]`.
    pub fn net1_default() -> Self {
        Architecture::new(vec![48, 24, 4, 1], vec![24, 12, 6])
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if self.orders.is_empty() {
            return Err(GnnError::InvalidArchitecture("at least one layer is required".into()));
        }
        if self.orders.len() != self.widths.len() + 1 {
            return Err(GnnError::InvalidArchitecture(format!(
                "{} orders need {} widths, found {}",
                self.orders.len(),
                self.orders.len() - 1,
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(GnnError::InvalidArchitecture("widths must be positive".into()));
        }
        Ok(())
    }

    /// `(F_in, F_out)` for every layer given the input channel count.
    pub fn layer_shapes(&self, in_channels: usize) -> Vec<(usize, usize)> {
        let mut dims = vec![in_channels];
        dims.extend(&self.widths);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Elementwise product of a signal with a 0/1 sensor mask.
pub fn mask_apply(x: &[f64], mask: &[u8]) -> Result<Vec<f64>, GnnError> {
    if x.len() != mask.len() {
        return Err(GnnError::DimensionMismatch {
            expected: mask.len(),
            found: x.len(),
        });
    }
    Ok(x.iter().zip(mask).map(|(v, m)| if *m != 0 { *v } else { 0.0 }).collect())
}
