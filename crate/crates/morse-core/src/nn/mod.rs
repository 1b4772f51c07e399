//! Trainable denoiser components: time embedding, dense network with
//! reverse-mode gradients, Adam, and the standard training loop.

pub mod adam;
pub mod embed;
pub mod mlp;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use embed::sinusoidal_time_embed;
pub use mlp::{Activation, DenseLayer, MlpConfig, MlpDenoiser, MlpTape};
pub use train::{train_dash, DashTrainConfig, TrainedDash};
