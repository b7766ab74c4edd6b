//! Pairwise interactive graph attention model: attention heads, integrate layers,
//! MLP head and log-loss, with a hand-written reverse pass.

pub mod attention;
pub mod gradcheck;
pub mod network;
pub mod params;

pub use attention::{attention_coefficients, pooled_embedding, AttentionHead, AttentionKind, HeadCache};
pub use gradcheck::{gradcheck, gradcheck_seeds, gradcheck_with, tiny_config, GradcheckOptions, GradcheckReport, TensorCheck};
pub use network::{batch_loss, batch_loss_and_gradient, instance_rng, log_loss, ForwardCache, Mode};
pub use params::{ModelConfig, ModelDims, PigatParams, PoolingMode, QuerySource, HEAD_NAMES, MLP_HIDDEN};

use crate::error::Result;
use crate::numeric::{leaky_relu, Dense, LEAKY_SLOPE};

/// `LeakyReLU(W·[profile ‖ interactive] + b)`
pub fn integrate(profile: &[f64], interactive: &[f64], layer: &Dense) -> Result<Vec<f64>> {
    let mut input = profile.to_vec();
    input.extend_from_slice(interactive);
    Ok(leaky_relu(&layer.forward(&input)?, LEAKY_SLOPE))
}

/// `LeakyReLU(W'·[h_interactive ‖ h_adaptive] + b')`
pub fn adaptive_integrate(interactive: &[f64], adaptive: &[f64], layer: &Dense) -> Result<Vec<f64>> {
    integrate(interactive, adaptive, layer)
}
