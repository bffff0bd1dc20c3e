//! Discretization-induced Dirichlet posterior.
//!
//! Main-task errors are cut into `K` equal-mass classes ([`DiscretizationSpec`]),
//! each datum's class becomes a one-hot target, and the epistemic head learns
//! per-input evidence `e ≥ 0` for a Dirichlet with concentration `α = e + 1`.
//! The epistemic score is `K / S` with `S = Σ α`.

mod dirichlet;
mod discretize;

pub use dirichlet::{
    aleatoric_from_dirichlet, combined_auxue_loss, combined_auxue_loss_value, dido_loss,
    dido_loss_value, dirichlet_log_pdf, epistemic_uncertainty, evidence_to_alpha,
    kl_dirichlet_to_uniform, kl_dirichlet_to_uniform_graph, DirichletOutput,
};
pub use discretize::{discretize_per_sample, one_hot, DiscretizationSpec, OneHotTarget};
