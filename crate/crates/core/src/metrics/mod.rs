//! Uncertainty-evaluation metrics.
//!
//! Ties are always broken by input index (earlier first) so every metric is a
//! deterministic function of its inputs.

mod calibration;
mod ranking;
mod sparsification;

pub use calibration::uce;
pub use ranking::{pr_aupr, roc_auc};
pub use sparsification::{
    ause_aurg, sparsification_curves, CurveKind, ErrorMetric, SparsificationCurve,
    SparsificationCurves,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Default number of UCE bins.
pub const UCE_BINS: usize = 15;
/// Default sparsification step.
pub const SPARSIFICATION_STEP: f64 = 0.05;

/// Aleatoric-score quality on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ause_rel: f64,
    pub ause_rmse: f64,
    pub aurg_rel: f64,
    pub aurg_rmse: f64,
    pub uce: f64,
    /// Present when an OOD set was scored alongside.
    pub auc: Option<f64>,
    pub aupr: Option<f64>,
    /// Data points dropped from the REL curves because their target was zero.
    pub rel_excluded: usize,
    pub curve_rel: SparsificationCurves,
    pub curve_rmse: SparsificationCurves,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl MetricsReport {
    /// Sparsification and calibration metrics of `scores` against the
    /// residuals `targets − predictions`.
    pub fn evaluate(residuals: &[f64], targets: &[f64], scores: &[f64]) -> Result<Self> {
        let curve_rel =
            sparsification_curves(residuals, targets, scores, SPARSIFICATION_STEP, ErrorMetric::Rel)?;
        let curve_rmse =
            sparsification_curves(residuals, targets, scores, SPARSIFICATION_STEP, ErrorMetric::Rmse)?;
        let (ause_rel, aurg_rel) = curve_rel.ause_aurg()?;
        let (ause_rmse, aurg_rmse) = curve_rmse.ause_aurg()?;
        let abs_err: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        Ok(MetricsReport {
            ause_rel,
            ause_rmse,
            aurg_rel,
            aurg_rmse,
            uce: uce(&abs_err, scores, UCE_BINS)?,
            auc: None,
            aupr: None,
            rel_excluded: curve_rel.excluded,
            curve_rel,
            curve_rmse,
            seed: None,
            config_hash: None,
        })
    }

    pub fn with_run(mut self, seed: u64, config_hash: &str) -> Self {
        self.seed = Some(seed);
        self.config_hash = Some(config_hash.to_string());
        self
    }

    pub fn with_ood(mut self, auc: f64, aupr: f64) -> Self {
        self.auc = Some(auc);
        self.aupr = Some(aupr);
        self
    }
}
