use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distloss::AleatoricKind;
use crate::error::{Error, Result};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ToyA,
    ToyB,
    Tabular,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ToyA => "toy_a",
            ExperimentKind::ToyB => "toy_b",
            ExperimentKind::Tabular => "tabular",
        }
    }

    pub fn is_toy(self) -> bool {
        !matches!(self, ExperimentKind::Tabular)
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "toy_a" => Ok(ExperimentKind::ToyA),
            "toy_b" => Ok(ExperimentKind::ToyB),
            "tabular" => Ok(ExperimentKind::Tabular),
            _ => Err(Error::Contract(format!("unknown experiment `{s}`"))),
        }
    }
}

/// Optimizer schedule shared by every network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl TrainSpec {
    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Contract(format!(
                "{what}: learning rate, epochs and batch must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainConfig {
    pub hidden: Vec<usize>,
    pub train: TrainSpec,
}

/// Where the AuxUE reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxInput {
    /// Penultimate activations of the frozen main model.
    Penultimate,
    /// The (standardized) raw features, through a per-head ReLU extractor of this width.
    Raw { extractor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxueConfig {
    pub input: AuxInput,
    /// Width of the cosine layer and of the hidden layer in the evidence head.
    pub hidden: usize,
    pub train: TrainSpec,
    pub k: usize,
    pub lambda: f64,
    pub dist: AleatoricKind,
    /// Initial bias of the evidence layer, so training starts near zero evidence.
    pub evidence_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Toy only: training and test sample counts.
    pub n_train: usize,
    pub n_test: usize,
    /// Tabular only.
    pub path: Option<PathBuf>,
    pub target: String,
    pub sep: char,
    pub split: (f64, f64, f64),
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub main: MainConfig,
    pub auxue: AuxueConfig,
    pub ensemble_size: usize,
    pub data: DataConfig,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    pub exec: Exec,
}

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
pub const WINE_PATH: &str = "data/winequality-red.csv";

impl ExperimentConfig {
    /// Settings for the 1D toy problems.
    pub fn toy(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seeds: DEFAULT_SEEDS.to_vec(),
            main: MainConfig {
                hidden: vec![300; 4],
                train: TrainSpec {
                    lr: 0.001,
                    epochs: 200,
                    batch: 64,
                },
            },
            auxue: AuxueConfig {
                input: AuxInput::Penultimate,
                hidden: 300,
                train: TrainSpec {
                    lr: 0.005,
                    epochs: 100,
                    batch: 64,
                },
                k: 5,
                lambda: 0.001,
                dist: AleatoricKind::Laplace,
                evidence_bias: -16.0,
            },
            ensemble_size: 0,
            data: DataConfig {
                n_train: 1000,
                n_test: 1000,
                path: None,
                target: "y".into(),
                sep: ',',
                split: (0.72, 0.08, 0.2),
                standardize: false,
            },
            out_dir: None,
            exec: Exec::default(),
        }
    }

    /// Settings for the red-wine OOD experiment.
    pub fn tabular() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Tabular,
            seeds: DEFAULT_SEEDS.to_vec(),
            main: MainConfig {
                hidden: vec![16, 32, 16],
                train: TrainSpec {
                    lr: 0.001,
                    epochs: 150,
                    batch: 64,
                },
            },
            auxue: AuxueConfig {
                input: AuxInput::Raw { extractor: 16 },
                hidden: 300,
                train: TrainSpec {
                    lr: 0.001,
                    epochs: 20,
                    batch: 64,
                },
                k: 5,
                lambda: 1e-4,
                dist: AleatoricKind::Laplace,
                evidence_bias: -16.0,
            },
            ensemble_size: 3,
            data: DataConfig {
                n_train: 0,
                n_test: 0,
                path: Some(WINE_PATH.into()),
                target: "quality".into(),
                sep: ',',
                split: (0.72, 0.08, 0.2),
                standardize: true,
            },
            out_dir: None,
            exec: Exec::default(),
        }
    }

    pub fn preset(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Tabular => Self::tabular(),
            toy => Self::toy(toy),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Contract("at least one seed is required".into()));
        }
        self.main.train.validate("main")?;
        self.auxue.train.validate("auxue")?;
        if self.auxue.k < 2 {
            return Err(Error::Contract(format!("K must be at least 2, got {}", self.auxue.k)));
        }
        if !(self.auxue.lambda >= 0.0 && self.auxue.lambda.is_finite()) {
            return Err(Error::Contract(format!("λ must be non-negative, got {}", self.auxue.lambda)));
        }
        if self.main.hidden.is_empty() || self.main.hidden.contains(&0) || self.auxue.hidden == 0 {
            return Err(Error::Contract("hidden widths must be positive".into()));
        }
        if self.kind == ExperimentKind::Tabular {
            if self.ensemble_size < 2 {
                return Err(Error::Contract(format!(
                    "deep ensembles need at least 2 members, got {}",
                    self.ensemble_size
                )));
            }
            if self.data.path.is_none() {
                return Err(Error::Contract("tabular experiment needs a data path".into()));
            }
            if !self.data.sep.is_ascii() {
                return Err(Error::Contract(format!("separator `{}` is not ASCII", self.data.sep)));
            }
        } else if self.data.n_train < 10 || self.data.n_test < 10 {
            return Err(Error::Contract("toy data needs at least 10 train and test points".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, as hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Independent stream for `(seed, purpose)`.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
