//! Minimal dense-network engine used by every encoder, decoder and estimator
//! in the crate. Everything is 64-bit; batches are rows of a [`Tensor2D`].

mod adam;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{cross_entropy_loss, one_hot, one_hot_batch, CrossEntropy, PROB_FLOOR};
pub use mlp::{
    power_normalize, power_normalize_rows, Activation, DenseLayer, ForwardCache, Gradients,
    MlpModel, POWER_NORM_EPS,
};

pub type Tensor2D = ndarray::Array2<f64>;

/// Hidden-layer width used by codec networks when none is configured.
pub fn default_hidden_width(output_cardinality: usize) -> usize {
    128.max(2 * output_cardinality)
}
