//! Auxiliary uncertainty estimation for regression.
//!
//! A frozen main-task regressor is paired with an auxiliary estimator that has
//! two heads: an aleatoric head trained with a distribution-assumption
//! negative log-likelihood, and an epistemic head that learns a Dirichlet
//! posterior over discretized prediction-error classes. The epistemic score is
//! `K / S`, the class count over the Dirichlet strength.
//!
//! Module map:
//!
//! - [`diffkit`]: dense tensors, reverse-mode autodiff, log-gamma/digamma.
//! - [`nnet`]: MLPs, cosine-similarity layer, Adam.
//! - [`distloss`]: MSE and the Gaussian/Laplace/generalized-Gaussian/NIG NLLs.
//! - [`dido`]: error discretization, Dirichlet loss and uncertainty readouts.
//! - [`metrics`]: sparsification curves, AUSE/AURG, ROC-AUC, AUPR, UCE.
//! - [`datagen`]: toy 1D signals, CSV ingestion, splits, OOD perturbations.
//! - [`harness`]: training loops, checkpoints, reports, end-to-end experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod dido;
pub mod diffkit;
pub mod distloss;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nnet;
pub mod par;

pub use error::{Error, Result};
