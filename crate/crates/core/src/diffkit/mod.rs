//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes; [`Graph::backward`]
//! walks the record in reverse and accumulates adjoints. Nodes are appended in
//! evaluation order, so the node index is already a topological order.

mod gradcheck;
mod graph;
pub mod special;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, GradNode, Graph, OpKind, Var};
pub use tensor::Tensor;
