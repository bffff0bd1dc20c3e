use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-datum error measure used by a sparsification curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    /// Mean of `|r| / |y|`.
    Rel,
    /// Square root of the mean of `r²`.
    Rmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Predictive,
    Oracle,
    Random,
}

/// Error of the retained set after removing the top fraction `t` of items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurve {
    pub kind: CurveKind,
    pub fractions: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurves {
    pub metric: ErrorMetric,
    pub predictive: SparsificationCurve,
    pub oracle: SparsificationCurve,
    pub random: SparsificationCurve,
    /// Items left out because `metric` is REL and their target is zero.
    pub excluded: usize,
}

impl SparsificationCurves {
    pub fn ause_aurg(&self) -> Result<(f64, f64)> {
        ause_aurg(&self.predictive, &self.oracle, &self.random)
    }
}

/// Number of steps `m` with `step = 1 / m`.
fn steps_for(step: f64) -> Result<usize> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::Contract(format!("step must lie in (0, 1), got {step}")));
    }
    let m = (1.0 / step).round();
    if (1.0 / m - step).abs() > 1e-9 {
        return Err(Error::Contract(format!("step {step} does not divide 1")));
    }
    Ok(m as usize)
}

/// Descending order of `key`, ties by ascending index.
fn removal_order(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    idx
}

fn aggregate(metric: ErrorMetric, mean: f64) -> f64 {
    match metric {
        ErrorMetric::Rel => mean,
        ErrorMetric::Rmse => mean.sqrt(),
    }
}

/// Retained-set error after removing `counts[i]` items in `order`.
fn curve_values(per_item: &[f64], order: &[usize], counts: &[usize], metric: ErrorMetric) -> Vec<f64> {
    let n = order.len();
    // suffix[j] = Σ of per_item over order[j..]
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + per_item[order[j]];
    }
    counts
        .iter()
        .map(|&c| {
            let kept = n - c;
            if kept == 0 {
                0.0
            } else {
                aggregate(metric, suffix[c] / kept as f64)
            }
        })
        .collect()
}

/// Predictive, oracle and random sparsification curves.
///
/// At fraction `t = k·step` (`t < 1`), the `⌈tN⌉` items with the highest
/// `scores` (predictive) or highest per-item error (oracle) are removed. The
/// random curve is the full-set error at every `t`. For REL, items with a
/// zero target are excluded up front and counted in `excluded`.
pub fn sparsification_curves(
    residuals: &[f64],
    targets: &[f64],
    scores: &[f64],
    step: f64,
    metric: ErrorMetric,
) -> Result<SparsificationCurves> {
    let n_all = residuals.len();
    if scores.len() != n_all || (metric == ErrorMetric::Rel && targets.len() != n_all) {
        return Err(Error::shape(
            "sparsification_curves",
            &[n_all, targets.len()],
            &[scores.len()],
        ));
    }
    let m = steps_for(step)?;

    let mut keep: Vec<usize> = (0..n_all).collect();
    if metric == ErrorMetric::Rel {
        keep.retain(|&i| targets[i] != 0.0);
    }
    let excluded = n_all - keep.len();
    if excluded > 0 {
        log::warn!("sparsification: {excluded} items with zero target excluded from REL");
    }
    if keep.is_empty() {
        return Err(Error::Contract("no items left to evaluate".into()));
    }
    let per_item: Vec<f64> = keep
        .iter()
        .map(|&i| match metric {
            ErrorMetric::Rel => residuals[i].abs() / targets[i].abs(),
            ErrorMetric::Rmse => residuals[i] * residuals[i],
        })
        .collect();
    let sc: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();
    let n = per_item.len();

    let fractions: Vec<f64> = (0..m).map(|k| k as f64 / m as f64).collect();
    let counts: Vec<usize> = (0..m).map(|k| (k * n).div_ceil(m)).collect();

    let predictive = curve_values(&per_item, &removal_order(&sc), &counts, metric);
    let oracle = curve_values(&per_item, &removal_order(&per_item), &counts, metric);
    let full = aggregate(metric, per_item.iter().sum::<f64>() / n as f64);

    let curve = |kind, values| SparsificationCurve {
        kind,
        fractions: fractions.clone(),
        values,
    };
    Ok(SparsificationCurves {
        metric,
        predictive: curve(CurveKind::Predictive, predictive),
        oracle: curve(CurveKind::Oracle, oracle),
        random: curve(CurveKind::Random, vec![full; m]),
        excluded,
    })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

/// `AUSE = ∫ (predictive − oracle)`, `AURG = ∫ (random − predictive)`, both by
/// the trapezoid rule over the shared fraction grid.
pub fn ause_aurg(
    predictive: &SparsificationCurve,
    oracle: &SparsificationCurve,
    random: &SparsificationCurve,
) -> Result<(f64, f64)> {
    if predictive.fractions != oracle.fractions || predictive.fractions != random.fractions {
        return Err(Error::Contract("sparsification curves use different fraction grids".into()));
    }
    let t = &predictive.fractions;
    let se: Vec<f64> = predictive.values.iter().zip(&oracle.values).map(|(p, o)| p - o).collect();
    let rg: Vec<f64> = random.values.iter().zip(&predictive.values).map(|(r, p)| r - p).collect();
    Ok((trapezoid(t, &se), trapezoid(t, &rg)))
}
