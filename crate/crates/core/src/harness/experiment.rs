use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig, ExperimentKind};
use super::train::{
    ensemble_seeds, regression_metrics, train_auxue, train_main, Ensemble, RegressionMetrics, UncertaintyOutput,
};
use crate::datagen::{
    gen_toy, load_tabular, perturb, split, toy_noise_std, PerturbationKind, RegressionDataset, SplitTag,
    Standardizer, ToyVariant,
};
use crate::diffkit::Tensor;
use crate::error::{Result, StageExt};
use crate::metrics::{pr_aupr, roc_auc, MetricsReport};
use crate::par;

pub const REPORT_VERSION: u32 = 1;
pub const TOY_GRID: usize = 600;

const SEED_TOY_TEST: u64 = 10;
const SEED_SPLIT: u64 = 11;
const SEED_OOD_SHUFFLE: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// `K / S` from `σ_Θ2`.
    Dido,
    /// Aleatoric scale from `σ_Θ1`, used as an OOD score.
    SigmaTheta1,
    /// Variance across deep-ensemble members.
    Dens,
}

impl ScoreMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::Dido => "dido",
            ScoreMethod::SigmaTheta1 => "sigma_theta1",
            ScoreMethod::Dens => "dens",
        }
    }
}

/// OOD detection with ID test inputs as negatives and one OOD set as positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodResult {
    pub set: String,
    pub method: ScoreMethod,
    pub auc: f64,
    pub aupr: f64,
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
}

/// Model outputs on an evenly spaced grid, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCurves {
    pub x: Vec<f64>,
    pub prediction: Vec<f64>,
    pub aleatoric: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub truth_mean: Vec<f64>,
    pub truth_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub test: RegressionMetrics,
    pub val_mse: Option<f64>,
    pub aleatoric: MetricsReport,
    pub initial_dido_loss: f64,
    /// Mean Dirichlet strength on the ID test set.
    pub mean_strength_id: f64,
    pub ood: Vec<OodResult>,
    pub regions: BTreeMap<String, f64>,
    pub curves: Option<ToyCurves>,
}

impl SeedReport {
    /// Flat metric map used for the headline CSV and seed averaging.
    pub fn headline(&self) -> BTreeMap<String, f64> {
        let mut h = BTreeMap::new();
        h.insert("test_mse".into(), self.test.mse);
        h.insert("test_mae".into(), self.test.mae);
        h.insert("test_rmse".into(), self.test.rmse);
        h.insert("ause_rel".into(), self.aleatoric.ause_rel);
        h.insert("ause_rmse".into(), self.aleatoric.ause_rmse);
        h.insert("aurg_rel".into(), self.aleatoric.aurg_rel);
        h.insert("aurg_rmse".into(), self.aleatoric.aurg_rmse);
        h.insert("uce".into(), self.aleatoric.uce);
        h.insert("mean_strength_id".into(), self.mean_strength_id);
        for r in &self.ood {
            h.insert(format!("auc_{}_{}", r.method.name(), r.set), r.auc);
            h.insert(format!("aupr_{}_{}", r.method.name(), r.set), r.aupr);
        }
        for m in [ScoreMethod::Dido, ScoreMethod::SigmaTheta1, ScoreMethod::Dens] {
            let rs: Vec<&OodResult> = self.ood.iter().filter(|r| r.method == m).collect();
            if !rs.is_empty() {
                let n = rs.len() as f64;
                h.insert(format!("auc_{}", m.name()), rs.iter().map(|r| r.auc).sum::<f64>() / n);
                h.insert(format!("aupr_{}", m.name()), rs.iter().map(|r| r.aupr).sum::<f64>() / n);
            }
        }
        for (k, v) in &self.regions {
            h.insert(k.clone(), *v);
        }
        h
    }
}

/// One tolerance check evaluated on the seed-mean metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedReport>,
    pub mean: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub elapsed_secs: f64,
}

fn mean_where(values: &[f64], xs: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    let picked: Vec<f64> = values.iter().zip(xs).filter(|(_, &x)| keep(x)).map(|(&v, _)| v).collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

fn toy_regions(kind: ExperimentKind, c: &ToyCurves) -> BTreeMap<String, f64> {
    let (x, ale, epi) = (&c.x, &c.aleatoric, &c.epistemic);
    let mut r = BTreeMap::new();
    match kind {
        ExperimentKind::ToyA => {
            r.insert("aleatoric_left".into(), mean_where(ale, x, |x| (-3.0..0.0).contains(&x)));
            r.insert("aleatoric_right".into(), mean_where(ale, x, |x| (0.0..=3.0).contains(&x)));
            r.insert("epistemic_id".into(), mean_where(epi, x, |x| x.abs() <= 2.5));
            r.insert("epistemic_ood".into(), mean_where(epi, x, |x| (4.0..=6.0).contains(&x.abs())));
        }
        _ => {
            r.insert("aleatoric_left".into(), mean_where(ale, x, |x| (-3.0..=-1.0).contains(&x)));
            r.insert("aleatoric_right".into(), mean_where(ale, x, |x| (3.0..=5.0).contains(&x)));
            r.insert("epistemic_left".into(), mean_where(epi, x, |x| (-3.0..=-1.0).contains(&x)));
            r.insert("epistemic_gap".into(), mean_where(epi, x, |x| (0.0..=2.0).contains(&x)));
            r.insert("epistemic_right".into(), mean_where(epi, x, |x| (3.0..=5.0).contains(&x)));
        }
    }
    r
}

fn strength(out: &UncertaintyOutput, k: usize) -> f64 {
    let n = out.epistemic.len() as f64;
    out.evidence.data().iter().sum::<f64>() / n + k as f64
}

fn aleatoric_report(out: &UncertaintyOutput, test: &RegressionDataset) -> Result<MetricsReport> {
    let resid: Vec<f64> = test.targets.iter().zip(&out.prediction).map(|(y, p)| y - p).collect();
    MetricsReport::evaluate(&resid, &test.targets, &out.aleatoric)
}

fn run_toy(cfg: &ExperimentConfig, seed: u64) -> Result<SeedReport> {
    let variant = if cfg.kind == ExperimentKind::ToyA { ToyVariant::A } else { ToyVariant::B };
    let (train, test) = toy_data(cfg, seed).stage("gen_data")?;
    let main = train_main(&cfg.main, &train, None, seed).stage("train_main")?;
    let aux = train_auxue(&cfg.auxue, &main.net, &train, seed).stage("train_auxue")?;

    let out = aux.predict(&main.net, &test.features).stage("eval")?;
    let x: Vec<f64> = (0..TOY_GRID).map(|i| -6.0 + 12.0 * i as f64 / (TOY_GRID - 1) as f64).collect();
    let grid = aux.predict(&main.net, &Tensor::column(x.clone())).stage("eval")?;
    let curves = ToyCurves {
        truth_mean: x.iter().map(|x| 10.0 * x.sin()).collect(),
        truth_std: x.iter().map(|&x| toy_noise_std(variant, x)).collect(),
        x,
        prediction: grid.prediction,
        aleatoric: grid.aleatoric,
        epistemic: grid.epistemic,
    };
    Ok(SeedReport {
        seed,
        test: regression_metrics(&out.prediction, &test.targets)?,
        val_mse: None,
        aleatoric: aleatoric_report(&out, &test).stage("eval")?.with_run(seed, &cfg.hash()),
        initial_dido_loss: aux.initial_dido_loss,
        mean_strength_id: strength(&out, aux.k()),
        ood: Vec::new(),
        regions: toy_regions(cfg.kind, &curves),
        curves: Some(curves),
    })
}

fn ood_result(set: &str, method: ScoreMethod, id: Vec<f64>, ood: Vec<f64>) -> Result<OodResult> {
    let labels: Vec<bool> = id.iter().map(|_| false).chain(ood.iter().map(|_| true)).collect();
    let scores: Vec<f64> = id.iter().chain(&ood).copied().collect();
    Ok(OodResult {
        set: set.to_string(),
        method,
        auc: roc_auc(&scores, &labels)?,
        aupr: pr_aupr(&scores, &labels)?,
        id_scores: id,
        ood_scores: ood,
    })
}

/// One seed's tabular split, standardized with training-split statistics.
#[derive(Debug, Clone)]
pub struct PreparedTabular {
    pub train: RegressionDataset,
    pub val: RegressionDataset,
    pub test: RegressionDataset,
    /// Test split before standardization, for building OOD sets.
    pub test_raw: RegressionDataset,
    pub standardizer: Standardizer,
}

impl PreparedTabular {
    pub fn prepare(&self, d: &RegressionDataset) -> Result<RegressionDataset> {
        d.with_features(self.standardizer.transform(&d.features)?)
    }
}

pub fn prepare_tabular(cfg: &ExperimentConfig, raw: &RegressionDataset, seed: u64) -> Result<PreparedTabular> {
    let ds = split(raw, cfg.data.split, derive_seed(seed, SEED_SPLIT))?;
    let (train_raw, val_raw, test_raw) = (ds.part(SplitTag::Train)?, ds.part(SplitTag::Val)?, ds.part(SplitTag::Test)?);
    let standardizer = if cfg.data.standardize {
        Standardizer::fit(&train_raw.features)?
    } else {
        Standardizer::identity(raw.n_features())
    };
    let prep = |d: &RegressionDataset| d.with_features(standardizer.transform(&d.features)?);
    Ok(PreparedTabular {
        train: prep(&train_raw)?,
        val: prep(&val_raw)?,
        test: prep(&test_raw)?,
        test_raw,
        standardizer,
    })
}

/// The OOD transforms applied to the raw test split.
pub fn ood_kinds(seed: u64) -> [PerturbationKind; 2] {
    [
        PerturbationKind::NegateAll,
        PerturbationKind::ShuffleFeatures {
            seed: derive_seed(seed, SEED_OOD_SHUFFLE),
        },
    ]
}

/// Toy training and test sets for one seed.
pub fn toy_data(cfg: &ExperimentConfig, seed: u64) -> Result<(RegressionDataset, RegressionDataset)> {
    let variant = if cfg.kind == ExperimentKind::ToyA { ToyVariant::A } else { ToyVariant::B };
    Ok((
        gen_toy(variant, cfg.data.n_train, seed)?,
        gen_toy(variant, cfg.data.n_test, derive_seed(seed, SEED_TOY_TEST))?,
    ))
}

fn run_tabular(cfg: &ExperimentConfig, raw: &RegressionDataset, seed: u64) -> Result<SeedReport> {
    let p = prepare_tabular(cfg, raw, seed).stage("split")?;
    let (train, val, test) = (&p.train, &p.val, &p.test);
    let main = train_main(&cfg.main, train, Some(val), seed).stage("train_main")?;
    let aux = train_auxue(&cfg.auxue, &main.net, train, seed).stage("train_auxue")?;
    let mut members = vec![main.net.clone()];
    for &s in &ensemble_seeds(seed, cfg.ensemble_size)[1..] {
        members.push(train_main(&cfg.main, train, None, s).stage("train_ensemble")?.net);
    }
    let ensemble = Ensemble { members };

    let id = aux.predict(&main.net, &test.features).stage("eval")?;
    let (_, id_var) = ensemble.predict(&test.features).stage("eval")?;
    let mut ood = Vec::new();
    for kind in ood_kinds(seed) {
        let shifted = p.prepare(&perturb(&p.test_raw, kind)?)?;
        let o = aux.predict(&main.net, &shifted.features).stage("eval")?;
        let (_, o_var) = ensemble.predict(&shifted.features).stage("eval")?;
        let set = kind.name();
        ood.push(ood_result(set, ScoreMethod::Dido, id.epistemic.clone(), o.epistemic)?);
        ood.push(ood_result(set, ScoreMethod::SigmaTheta1, id.aleatoric.clone(), o.aleatoric)?);
        ood.push(ood_result(set, ScoreMethod::Dens, id_var.clone(), o_var)?);
    }
    Ok(SeedReport {
        seed,
        test: regression_metrics(&id.prediction, &test.targets)?,
        val_mse: main.val_mse,
        aleatoric: aleatoric_report(&id, test).stage("eval")?.with_run(seed, &cfg.hash()),
        initial_dido_loss: aux.initial_dido_loss,
        mean_strength_id: strength(&id, aux.k()),
        ood,
        regions: BTreeMap::new(),
        curves: None,
    })
}

fn check(name: &str, value: f64, threshold: f64, passed: bool) -> Check {
    Check {
        name: name.to_string(),
        value,
        threshold,
        passed,
    }
}

/// Tolerances on the seed-mean metrics.
pub fn evaluate_checks(kind: ExperimentKind, mean: &BTreeMap<String, f64>) -> Vec<Check> {
    let m = |k: &str| mean.get(k).copied().unwrap_or(f64::NAN);
    match kind {
        ExperimentKind::ToyA => {
            let ratio = m("epistemic_ood") / m("epistemic_id");
            let gain = m("aleatoric_left") / m("aleatoric_right");
            vec![
                check("epistemic_ood_over_id", ratio, 2.0, ratio >= 2.0),
                check("aleatoric_left_over_right", gain, 1.25, gain >= 1.25),
            ]
        }
        ExperimentKind::ToyB => {
            let gap = m("epistemic_gap");
            vec![
                check("epistemic_gap_minus_left", gap - m("epistemic_left"), 0.0, gap > m("epistemic_left")),
                check("epistemic_gap_minus_right", gap - m("epistemic_right"), 0.0, gap > m("epistemic_right")),
            ]
        }
        ExperimentKind::Tabular => {
            let (auc, aupr, mse) = (m("auc_dido"), m("aupr_dido"), m("test_mse"));
            let margin = auc - m("auc_dens");
            vec![
                check("auc_dido", auc, 0.85, auc >= 0.85),
                check("aupr_dido", aupr, 0.75, aupr >= 0.75),
                check("test_mse_low", mse, 0.55, mse >= 0.55),
                check("test_mse_high", mse, 0.75, mse <= 0.75),
                check("auc_dido_minus_dens", margin, 0.2, margin >= 0.2),
            ]
        }
    }
}

/// Trains and evaluates every seed, averages, and writes the report and
/// headline CSV when an output directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate().stage("config")?;
    let raw = match cfg.kind {
        ExperimentKind::Tabular => {
            let path = cfg.data.path.as_deref().expect("validated");
            Some(load_tabular(path, &cfg.data.target, cfg.data.sep as u8).stage("load_data")?)
        }
        _ => None,
    };
    let runs = par::try_map(cfg.exec, &cfg.seeds, |&seed| match &raw {
        Some(raw) => run_tabular(cfg, raw, seed),
        None => run_toy(cfg, seed),
    })?;

    let mut mean = BTreeMap::new();
    for r in &runs {
        for (k, v) in r.headline() {
            *mean.entry(k).or_insert(0.0) += v / runs.len() as f64;
        }
    }
    let report = RunReport {
        format_version: REPORT_VERSION,
        experiment: cfg.kind,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        checks: evaluate_checks(cfg.kind, &mean),
        mean,
        runs,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    for c in &report.checks {
        log::info!("{}: {:.4} (threshold {}) {}", c.name, c.value, c.threshold, if c.passed { "ok" } else { "MISS" });
    }
    if let Some(dir) = &cfg.out_dir {
        super::persist::write_report(&report, dir).stage("write_report")?;
    }
    Ok(report)
}
