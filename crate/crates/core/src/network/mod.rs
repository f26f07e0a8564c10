//! Layer stacks built from dense layers and structured-corrective blocks,
//! with forward traces, reverse-mode gradients and input Jacobians.

mod activation;
pub mod io;
mod layers;
mod pass;

pub use activation::Activation;
pub use layers::{init_params, BlockSpec, InitScheme, Layer, MlpLayer, Network, NetworkSpec, PgnnBlock};
pub use pass::{pathway_magnitudes, ForwardTrace, Gradients, LayerGrad, LayerTrace, PathwayMagnitude};
