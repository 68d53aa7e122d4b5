//! Minimal neural-network core: a dense `(channels, height, width)` tensor,
//! hand-written forward/adjoint pairs for the three layer kinds the model
//! uses, Adam, a finite-difference gradient checker and analytic
//! parameter/FLOP counters.
//!
//! Every layer is generic over [`Real`] so the same code runs in 32-bit for
//! training and in 64-bit for gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod complexity;
pub mod gradcheck;
pub mod layers;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use complexity::{count_flops, count_params, LayerSpec, Shape};
pub use gradcheck::{grad_check, GradCheckReport, Objective};
pub use layers::{
    conv1xk_backward, conv1xk_forward, fc_backward, fc_forward, leaky_relu, leaky_relu_backward,
};
pub use tensor::{Real, Tensor};
