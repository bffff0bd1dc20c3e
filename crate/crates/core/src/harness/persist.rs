use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::experiment::{RunReport, ToyCurves, REPORT_VERSION};
use super::train::{AuxUe, Ensemble, MainModel};
use crate::datagen::Standardizer;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Main(MainModel),
    Auxue(AuxUe),
    Ensemble(Ensemble),
}

/// A trained model with everything needed to apply it to raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub standardizer: Standardizer,
    pub payload: Payload,
}

impl Checkpoint {
    pub fn new(payload: Payload, standardizer: Standardizer, seed: u64, config_hash: String) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config_hash,
            seed,
            standardizer,
            payload,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| Error::Contract(e.to_string()))?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = load_versioned(path, CHECKPOINT_VERSION)?;
        let nets = match &ckpt.payload {
            Payload::Main(m) => vec![&m.net],
            Payload::Auxue(a) => vec![&a.theta1, &a.theta2],
            Payload::Ensemble(e) => e.members.iter().collect(),
        };
        for net in nets {
            net.validate().map_err(|e| malformed(path, e))?;
        }
        if let Payload::Auxue(a) = &ckpt.payload {
            a.discretization.validate().map_err(|e| malformed(path, e))?;
        }
        Ok(ckpt)
    }

    pub fn main(&self) -> Result<&MainModel> {
        match &self.payload {
            Payload::Main(m) => Ok(m),
            _ => Err(Error::Contract("checkpoint does not hold a main model".into())),
        }
    }

    pub fn auxue(&self) -> Result<&AuxUe> {
        match &self.payload {
            Payload::Auxue(a) => Ok(a),
            _ => Err(Error::Contract("checkpoint does not hold an AuxUE".into())),
        }
    }

    pub fn ensemble(&self) -> Result<&Ensemble> {
        match &self.payload {
            Payload::Ensemble(e) => Ok(e),
            _ => Err(Error::Contract("checkpoint does not hold an ensemble".into())),
        }
    }
}

fn malformed(path: &Path, detail: impl ToString) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Parses JSON with a top-level `format_version`, rejecting other versions
/// before decoding the rest.
pub fn load_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T> {
    let bytes = fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| malformed(path, e))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed(path, "missing format_version"))?;
    if found != expected as u64 {
        return Err(Error::Version {
            found: found as u32,
            expected,
        });
    }
    serde_json::from_value(value).map_err(|e| malformed(path, e))
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `seed,metric,value` rows, per seed and then the mean. No timing, so the
/// file is a pure function of the configuration.
pub fn headline_csv(report: &RunReport) -> String {
    let mut out = String::from("experiment,seed,metric,value\n");
    let exp = report.experiment.name();
    for r in &report.runs {
        for (k, v) in r.headline() {
            writeln!(out, "{exp},{},{k},{v}", r.seed).expect("string write");
        }
    }
    for (k, v) in &report.mean {
        writeln!(out, "{exp},mean,{k},{v}").expect("string write");
    }
    for c in &report.checks {
        writeln!(out, "{exp},check,{},{}", c.name, u8::from(c.passed)).expect("string write");
    }
    out
}

pub fn curves_csv(c: &ToyCurves) -> String {
    let mut out = String::from("x,prediction,aleatoric,epistemic,truth_mean,truth_std\n");
    for i in 0..c.x.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.x[i], c.prediction[i], c.aleatoric[i], c.epistemic[i], c.truth_mean[i], c.truth_std[i]
        )
        .expect("string write");
    }
    out
}

/// `report.json`, `headline.csv` and, for toy runs, one curve CSV per seed.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).map_err(|e| Error::Contract(e.to_string()))?;
    write_atomic(&dir.join("report.json"), &json)?;
    write_atomic(&dir.join("headline.csv"), headline_csv(report).as_bytes())?;
    for r in &report.runs {
        if let Some(c) = &r.curves {
            write_atomic(&dir.join(format!("curves_seed{}.csv", r.seed)), curves_csv(c).as_bytes())?;
        }
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    load_versioned(path, REPORT_VERSION)
}
