//! Dense arrays, the fixed differentiable layers, optimizers, gradient
//! checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Gru, GruCache, Linear, TextCache, TextEncoder, TextEncoderShape};
pub use optim::{AdamConfig, OptimizerConfig, OptimizerState, RmsPropConfig};
pub use params::{Gradients, ParamId, ParamSet};
pub use tensor::{distance_to_row, l2_distance, Real, Tensor};
