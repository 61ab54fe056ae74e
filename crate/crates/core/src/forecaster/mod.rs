//! Graph + temporal convolutional single-step forecaster.
//!
//! Windows of `w` past steps per sensor are lifted to `residual_channels`
//! features, passed through `blocks` pairs of gated inception convolutions
//! and weighted graph convolutions, and reduced to one prediction per sensor.
//! Gradients come from the small reverse-mode [`tape`](Tape).

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{load_model, load_model_for, save_model, save_model_with_header};
pub use gradcheck::{gradient_check, GradientCheck};
pub use layers::{gated_tc_forward, gcn_forward, inception_forward, normalize_adjacency, receptive_field, Branch};
pub use model::{mse_loss, ForecastModel, ModelConfig, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{evaluate, predict, train, LossHistory, Optimizer, TrainConfig};
