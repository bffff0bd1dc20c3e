//! Multilayer perceptrons, the cosine-similarity layer, and Adam.

mod adam;
mod layers;
mod mlp;

pub use adam::AdamState;
pub use layers::{Activation, CosineSimLayer, Layer, LinearLayer};
pub use mlp::{minibatches, Forward, Mlp, MlpSpec};
