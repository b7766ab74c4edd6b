//! Dense linear algebra and differentiable layers with hand-written backward passes.

pub mod adam;
pub mod dropout;
pub mod gradcheck;
pub mod layers;
pub mod matrix;

pub use adam::{AdamConfig, AdamState};
pub use dropout::dropout_mask;
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use layers::{
    affine_forward, clamp_probability, dense_leaky_forward, leaky_relu, leaky_relu_backward, masked_softmax, sigmoid,
    softmax, softmax_backward, Dense, Ffn, FfnCache, LEAKY_SLOPE, PROB_FLOOR,
};
pub use matrix::{axpy, dot, Matrix};
