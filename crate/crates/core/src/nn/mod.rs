//! Minimal dense neural-network engine.

mod activation;
mod adam;
mod gradcheck;
mod layer;
mod loss;
mod matrix;
mod net;

pub use activation::{
    elu, log_softmax_rows, logsumexp, sigmoid, softmax, softmax_inplace, softmax_rows, Activation,
};
pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradients, Parameterized};
pub use layer::{AffineLayer, BatchNormLayer, Layer, Mode, BN_EPSILON, BN_MOMENTUM};
pub use loss::{bce_loss, half_sq_distance, softmax_cross_entropy, BCE_CLAMP};
pub use matrix::Matrix;
pub use net::{ForwardCache, Gradients, MultiLayerNet};
