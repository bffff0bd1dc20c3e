//! Synthetic 1D data, tabular CSV ingestion, splits and OOD perturbations.

mod tabular;
mod toy;

pub use tabular::{load_tabular, perturb, PerturbationKind};
pub use toy::{gen_toy, toy_noise_std, ToyVariant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffkit::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Features `[N × d]`, targets `[N]` and an optional split tag per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub features: Tensor,
    pub targets: Vec<f64>,
    pub split: Option<Vec<SplitTag>>,
    pub feature_names: Vec<String>,
}

impl RegressionDataset {
    pub fn new(features: Tensor, targets: Vec<f64>) -> Result<Self> {
        let d = features.cols();
        let ds = RegressionDataset {
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            features,
            targets,
            split: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.shape().len() != 2 || self.features.rows() != self.targets.len() {
            return Err(Error::shape(
                "RegressionDataset",
                self.features.shape(),
                &[self.targets.len()],
            ));
        }
        if !self.features.all_finite() || self.targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        if self.feature_names.len() != self.features.cols() {
            return Err(Error::Data("one name per feature column expected".into()));
        }
        if let Some(s) = &self.split {
            if s.len() != self.targets.len() {
                return Err(Error::Data("one split tag per row expected".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Targets as a `[N × 1]` column.
    pub fn target_column(&self) -> Tensor {
        Tensor::column(self.targets.clone())
    }

    pub fn select(&self, rows: &[usize]) -> RegressionDataset {
        RegressionDataset {
            features: self.features.select_rows(rows),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            split: self.split.as_ref().map(|s| rows.iter().map(|&i| s[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Rows tagged `tag`, in original order.
    pub fn part(&self, tag: SplitTag) -> Result<RegressionDataset> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Contract("dataset has not been split".into()))?;
        let rows: Vec<usize> = (0..self.len()).filter(|&i| split[i] == tag).collect();
        Ok(self.select(&rows))
    }

    pub fn with_features(&self, features: Tensor) -> Result<RegressionDataset> {
        let ds = RegressionDataset {
            features,
            ..self.clone()
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Split sizes for `n` rows: `⌊f·n⌋` for validation and test, the rest to train.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let size = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let (n_val, n_test) = (size(va), size(te));
    let n_train = n.saturating_sub(n_val + n_test);
    for (name, k) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if k == 0 {
            return Err(Error::Data(format!("{name} split of {n} rows with {fractions:?} is empty")));
        }
    }
    Ok((n_train, n_val, n_test))
}

/// Seeded permutation, then contiguous train / val / test blocks.
pub fn split(ds: &RegressionDataset, fractions: (f64, f64, f64), seed: u64) -> Result<RegressionDataset> {
    let (n_train, n_val, _) = split_sizes(ds.len(), fractions)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut tags = vec![SplitTag::Test; ds.len()];
    for (pos, &row) in order.iter().enumerate() {
        if pos < n_train {
            tags[row] = SplitTag::Train;
        } else if pos < n_train + n_val {
            tags[row] = SplitTag::Val;
        }
    }
    Ok(RegressionDataset {
        split: Some(tags),
        ..ds.clone()
    })
}

/// Per-column z-score fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale.
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n == 0 {
            return Err(Error::Data("cannot standardize zero rows".into()));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                var[j] += (x.row(i)[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape("Standardizer::transform", x.shape(), &[self.mean.len()]));
        }
        let d = self.mean.len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }
}
