//! Minimal differentiable-layer toolkit. Every layer has a hand-written
//! backward pass; [`gradcheck`] holds the numerical reference for them.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod params;
pub mod pool;
pub mod stack;

pub use activation::{sigmoid, Activation};
pub use conv::{conv2d, conv2d_backward, conv_output_dim, conv_transpose2d, conv_transpose2d_backward};
pub use dense::{dense, dense_backward};
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use init::glorot_uniform;
pub use loss::{
    binary_cross_entropy, l2_loss, softmax, softmax_cross_entropy, weighted_binary_cross_entropy, LossValue,
};
pub use lstm::{init_lstm, lstm_step, lstm_step_backward, lstm_step_cached, LstmCache, LstmParams};
pub use params::{Adam, AdamConfig, ParamSet};
pub use pool::{avg_pool2d, avg_pool2d_backward, max_pool2d, max_pool2d_backward, upsample2d, upsample2d_backward};
pub use stack::{Layer, LayerCache, LayerKind, Stack};
