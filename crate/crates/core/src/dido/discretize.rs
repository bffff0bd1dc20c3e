use serde::{Deserialize, Serialize};

use crate::diffkit::Tensor;
use crate::error::{Error, Result};

/// `K + 1` ascending cut points over the error distribution.
///
/// Class 0 covers `[t0, t1]`; class `j > 0` covers `(tj, tj+1]`. Errors below
/// `t0` fall in class 0 and errors above `tK` in class `K − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    k: usize,
    thresholds: Vec<f64>,
}

/// Class index together with the class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotTarget {
    pub class: usize,
    pub k: usize,
}

impl OneHotTarget {
    pub fn to_vec(self) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        v[self.class] = 1.0;
        v
    }
}

/// Linear-interpolation quantile of sorted data at level `num / den`, with the
/// position `(n − 1)·num/den` computed exactly in integers.
fn quantile_sorted(sorted: &[f64], num: usize, den: usize) -> f64 {
    let pos = (sorted.len() - 1) * num;
    let lo = pos / den;
    let rem = pos % den;
    if rem == 0 {
        sorted[lo]
    } else {
        let frac = rem as f64 / den as f64;
        sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac
    }
}

impl DiscretizationSpec {
    /// Cuts at the empirical quantiles `j / K`, `j = 0..=K`.
    pub fn fit(errors: &[f64], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Contract(format!("need at least 2 classes, got {k}")));
        }
        if errors.len() < k {
            return Err(Error::Contract(format!(
                "{} errors cannot fill {k} classes",
                errors.len()
            )));
        }
        if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
            return Err(Error::domain("fit_discretization", format!("non-finite error {bad}")));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let thresholds = (0..=k).map(|j| quantile_sorted(&sorted, j, k)).collect();
        Ok(DiscretizationSpec { k, thresholds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.thresholds.len() != self.k + 1 {
            return Err(Error::Contract("discretization needs K ≥ 2 and K + 1 thresholds".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Contract("thresholds must be non-decreasing".into()));
        }
        Ok(())
    }

    pub fn classify(&self, error: f64) -> usize {
        let upper = &self.thresholds[1..];
        upper.partition_point(|&t| t < error).min(self.k - 1)
    }

    pub fn assign(&self, errors: &[f64]) -> Vec<usize> {
        errors.iter().map(|&e| self.classify(e)).collect()
    }

    pub fn target(&self, error: f64) -> OneHotTarget {
        OneHotTarget {
            class: self.classify(error),
            k: self.k,
        }
    }

    /// `[N × K]` one-hot matrix of the errors' classes.
    pub fn one_hot(&self, errors: &[f64]) -> Tensor {
        one_hot(&self.assign(errors), self.k)
    }
}

/// `[N × K]` one-hot matrix.
pub fn one_hot(classes: &[usize], k: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        data[i * k + c] = 1.0;
    }
    Tensor::matrix(classes.len(), k, data).expect("sized")
}

/// Classes for the elements of one sample, with quantiles computed from that
/// sample alone. Masked-out elements (`mask[i] == false`) get `None`.
pub fn discretize_per_sample(
    errors: &[f64],
    mask: Option<&[bool]>,
    k: usize,
) -> Result<Vec<Option<usize>>> {
    if let Some(m) = mask {
        if m.len() != errors.len() {
            return Err(Error::shape("discretize_per_sample", &[errors.len()], &[m.len()]));
        }
    }
    let valid = |i: usize| mask.is_none_or(|m| m[i]);
    let kept: Vec<f64> = (0..errors.len()).filter(|&i| valid(i)).map(|i| errors[i]).collect();
    if kept.len() < k {
        return Err(Error::Contract(format!(
            "sample has {} valid elements, fewer than K = {k}",
            kept.len()
        )));
    }
    let spec = DiscretizationSpec::fit(&kept, k)?;
    Ok((0..errors.len())
        .map(|i| valid(i).then(|| spec.classify(errors[i])))
        .collect())
}
