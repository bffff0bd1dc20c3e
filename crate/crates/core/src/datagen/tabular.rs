use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressionDataset;
use crate::diffkit::Tensor;
use crate::error::{Error, Result};

/// Loads a headed CSV; every column except `target` becomes a feature.
pub fn load_tabular(path: &Path, target: &str, sep: u8) -> Result<RegressionDataset> {
    let malformed = |detail: String| Error::Malformed {
        path: path.to_path_buf(),
        detail,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(sep)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| malformed(e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(malformed("empty file".into()));
    }
    let t_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| malformed(format!("missing target column `{target}` (have {headers:?})")))?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                malformed(format!(
                    "non-numeric cell `{cell}` at row {} column `{}`",
                    r + 1,
                    headers.get(c).map_or("?", String::as_str)
                ))
            })?;
            if c == t_col {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(malformed("no data rows".into()));
    }
    let d = headers.len() - 1;
    let ds = RegressionDataset {
        features: Tensor::matrix(y.len(), d, x)?,
        targets: y,
        split: None,
        feature_names: headers.into_iter().enumerate().filter(|&(c, _)| c != t_col).map(|(_, h)| h).collect(),
    };
    ds.validate()?;
    log::info!("loaded {} rows × {d} features from {}", ds.len(), path.display());
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Every feature cell becomes `−|x|`.
    NegateAll,
    /// Each column is permuted independently.
    ShuffleFeatures { seed: u64 },
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::NegateAll => "negate_all",
            PerturbationKind::ShuffleFeatures { .. } => "shuffle_features",
        }
    }
}

/// Feature-only transform; targets and split tags are kept.
pub fn perturb(ds: &RegressionDataset, kind: PerturbationKind) -> Result<RegressionDataset> {
    let (n, d) = (ds.len(), ds.n_features());
    let mut x = ds.features.clone();
    match kind {
        PerturbationKind::NegateAll => x.data_mut().iter_mut().for_each(|v| *v = -v.abs()),
        PerturbationKind::ShuffleFeatures { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..n).collect();
            for j in 0..d {
                perm.shuffle(&mut rng);
                let col: Vec<f64> = (0..n).map(|i| ds.features.data()[i * d + j]).collect();
                for (i, &p) in perm.iter().enumerate() {
                    x.data_mut()[i * d + j] = col[p];
                }
            }
        }
    }
    ds.with_features(x)
}
