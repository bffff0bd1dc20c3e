//! Command-line front end: data generation, training, evaluation and full
//! experiment runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dido_core::datagen::{gen_toy, load_tabular, perturb, RegressionDataset, Standardizer, ToyVariant};
use dido_core::distloss::AleatoricKind;
use dido_core::harness::{
    self, ensemble_seeds, headline_csv, ood_kinds, prepare_tabular, regression_metrics, run_experiment,
    train_auxue, train_ensemble, train_main, write_atomic, Checkpoint, ExperimentConfig, ExperimentKind, Payload,
};
use dido_core::metrics::{pr_aupr, roc_auc, MetricsReport};
use dido_core::par::Exec;

#[derive(Parser)]
#[command(name = "dido", version, about = "Auxiliary aleatoric and epistemic uncertainty for regression")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a 1D toy dataset to CSV (columns x, y).
    GenData {
        #[arg(long, default_value = "a")]
        variant: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the main regressor; writes main.json.
    TrainMain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Train the AuxUE on a frozen main model; writes auxue.json.
    TrainAuxue {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        main: PathBuf,
        #[command(flatten)]
        aux: AuxArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Train a deep ensemble; writes ensemble.json.
    TrainEnsemble {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Member seeds; defaults to three seeds derived from --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Score held-out data with trained checkpoints.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        main: PathBuf,
        #[arg(long)]
        auxue: PathBuf,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a full multi-seed experiment and write report.json and headline.csv.
    Experiment {
        #[arg(value_parser = parse_kind)]
        kind: ExperimentKind,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Tabular data file (defaults to the bundled red-wine CSV).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_sep)]
        sep: Option<u8>,
        #[command(flatten)]
        aux: AuxArgs,
        /// Main-model schedule overrides.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// AuxUE schedule overrides.
        #[arg(long)]
        aux_epochs: Option<usize>,
        #[arg(long)]
        aux_lr: Option<f64>,
        /// Feed raw tabular features instead of z-scores.
        #[arg(long)]
        no_standardize: bool,
        /// Run seeds one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Toy,
    Tabular,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long, value_parser = parse_sep, default_value = ",")]
    sep: u8,
    /// Architecture and schedule defaults; `tabular` also splits 72/8/20 and
    /// standardizes.
    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    preset: Preset,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct AuxArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_dist)]
    dist: Option<AleatoricKind>,
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    s.parse().map_err(|e: dido_core::Error| e.to_string())
}

fn parse_dist(s: &str) -> std::result::Result<AleatoricKind, String> {
    s.parse().map_err(|e: dido_core::Error| e.to_string())
}

fn parse_sep(s: &str) -> std::result::Result<u8, String> {
    match s.as_bytes() {
        [b] => Ok(*b),
        _ if s == "\\t" => Ok(b'\t'),
        _ => Err(format!("separator must be a single byte, got `{s}`")),
    }
}

impl TrainArgs {
    fn apply(&self, t: &mut harness::TrainSpec) {
        if let Some(e) = self.epochs {
            t.epochs = e;
        }
        if let Some(lr) = self.lr {
            t.lr = lr;
        }
        if let Some(b) = self.batch {
            t.batch = b;
        }
    }
}

impl AuxArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(k) = self.k {
            cfg.auxue.k = k;
        }
        if let Some(l) = self.lambda {
            cfg.auxue.lambda = l;
        }
        if let Some(d) = self.dist {
            cfg.auxue.dist = d;
        }
    }
}

/// Training, validation and test data for the CLI training commands.
struct Prepared {
    cfg: ExperimentConfig,
    train: RegressionDataset,
    val: Option<RegressionDataset>,
    test: RegressionDataset,
    test_raw: RegressionDataset,
    standardizer: Standardizer,
}

fn prepare(d: &DataArgs) -> Result<Prepared> {
    let mut cfg = match d.preset {
        Preset::Toy => ExperimentConfig::toy(ExperimentKind::ToyA),
        Preset::Tabular => ExperimentConfig::tabular(),
    };
    cfg.data.path = Some(d.data.clone());
    cfg.data.target = d.target.clone();
    cfg.data.sep = d.sep as char;
    cfg.seeds = vec![d.seed];
    let raw = load_tabular(&d.data, &d.target, d.sep).map_err(|e| e.in_stage("load_data"))?;
    match d.preset {
        Preset::Toy => {
            let id = Standardizer::identity(raw.n_features());
            Ok(Prepared {
                cfg,
                train: raw.clone(),
                val: None,
                test: raw.clone(),
                test_raw: raw,
                standardizer: id,
            })
        }
        Preset::Tabular => {
            let p = prepare_tabular(&cfg, &raw, d.seed).map_err(|e| e.in_stage("split"))?;
            Ok(Prepared {
                cfg,
                train: p.train,
                val: Some(p.val),
                test: p.test,
                test_raw: p.test_raw,
                standardizer: p.standardizer,
            })
        }
    }
}

fn save(ckpt: &Checkpoint, dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    ckpt.save(&path).map_err(|e| e.in_stage("save_checkpoint"))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
        .map_err(|e| e.in_stage("load_checkpoint"))
        .with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { variant, n, seed, out } => {
            let v: ToyVariant = variant.parse()?;
            let ds = gen_toy(v, n, seed).map_err(|e| e.in_stage("gen_data"))?;
            let mut csv = String::from("x,y\n");
            for (x, y) in ds.features.data().iter().zip(&ds.targets) {
                csv.push_str(&format!("{x},{y}\n"));
            }
            write_atomic(&out, csv.as_bytes()).map_err(|e| e.in_stage("write_data"))?;
            println!("wrote {} rows to {}", n, out.display());
        }
        Command::TrainMain { data, train, out_dir } => {
            let mut p = prepare(&data)?;
            train.apply(&mut p.cfg.main.train);
            p.cfg.validate().map_err(|e| e.in_stage("config"))?;
            let m = train_main(&p.cfg.main, &p.train, p.val.as_ref(), data.seed).map_err(|e| e.in_stage("train_main"))?;
            let ckpt = Checkpoint::new(Payload::Main(m), p.standardizer, data.seed, p.cfg.hash());
            save(&ckpt, &out_dir, "main.json")?;
        }
        Command::TrainAuxue {
            data,
            main,
            aux,
            train,
            out_dir,
        } => {
            let mut p = prepare(&data)?;
            aux.apply(&mut p.cfg);
            train.apply(&mut p.cfg.auxue.train);
            p.cfg.validate().map_err(|e| e.in_stage("config"))?;
            let main = load(&main)?;
            let a = train_auxue(&p.cfg.auxue, &main.main()?.net, &p.train, data.seed)
                .map_err(|e| e.in_stage("train_auxue"))?;
            let ckpt = Checkpoint::new(Payload::Auxue(a), main.standardizer.clone(), data.seed, p.cfg.hash());
            save(&ckpt, &out_dir, "auxue.json")?;
        }
        Command::TrainEnsemble {
            data,
            train,
            seeds,
            out_dir,
        } => {
            let mut p = prepare(&data)?;
            train.apply(&mut p.cfg.main.train);
            let seeds = if seeds.is_empty() { ensemble_seeds(data.seed, 3) } else { seeds };
            let e = train_ensemble(&p.cfg.main, &p.train, &seeds, Exec::default())
                .map_err(|e| e.in_stage("train_ensemble"))?;
            let ckpt = Checkpoint::new(Payload::Ensemble(e), p.standardizer, data.seed, p.cfg.hash());
            save(&ckpt, &out_dir, "ensemble.json")?;
        }
        Command::Eval {
            data,
            main,
            auxue,
            ensemble,
            out_dir,
            format,
        } => {
            let p = prepare(&data)?;
            let main = load(&main)?;
            let aux = load(&auxue)?;
            let ens = ensemble.as_deref().map(load).transpose()?;
            let report = evaluate(&p, &main, &aux, ens.as_ref(), data.seed, data.preset)
                .map_err(|e| e.in_stage("eval"))?;
            let (name, body) = match format {
                Format::Json => ("eval.json", serde_json::to_string_pretty(&report)?),
                Format::Csv => ("eval.csv", flat_csv(&report)),
            };
            write_atomic(&out_dir.join(name), body.as_bytes()).map_err(|e| e.in_stage("write_report"))?;
            print!("{}", flat_csv(&report));
        }
        Command::Experiment {
            kind,
            seeds,
            data,
            sep,
            aux,
            epochs,
            lr,
            batch,
            aux_epochs,
            aux_lr,
            no_standardize,
            sequential,
            out_dir,
            format,
        } => {
            let mut cfg = ExperimentConfig::preset(kind);
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if data.is_some() {
                cfg.data.path = data;
            }
            if let Some(s) = sep {
                cfg.data.sep = s as char;
            }
            aux.apply(&mut cfg);
            TrainArgs { epochs, lr, batch }.apply(&mut cfg.main.train);
            TrainArgs {
                epochs: aux_epochs,
                lr: aux_lr,
                batch,
            }
            .apply(&mut cfg.auxue.train);
            if no_standardize {
                cfg.data.standardize = false;
            }
            cfg.exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            cfg.out_dir = Some(out_dir.clone());
            let report = run_experiment(&cfg)?;
            match format {
                Format::Csv => print!("{}", headline_csv(&report)),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.mean)?),
            }
            for c in &report.checks {
                eprintln!(
                    "{:<28} {:>10.4}  threshold {:<6} {}",
                    c.name,
                    c.value,
                    c.threshold,
                    if c.passed { "ok" } else { "miss" }
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    test: harness::RegressionMetrics,
    aleatoric: MetricsReport,
    mean_epistemic: f64,
    ood: Vec<EvalOod>,
}

#[derive(Serialize)]
struct EvalOod {
    set: String,
    method: String,
    auc: f64,
    aupr: f64,
}

fn evaluate(
    p: &Prepared,
    main: &Checkpoint,
    aux: &Checkpoint,
    ens: Option<&Checkpoint>,
    seed: u64,
    preset: Preset,
) -> dido_core::Result<EvalReport> {
    let net = &main.main()?.net;
    let a = aux.auxue()?;
    let out = a.predict(net, &p.test.features)?;
    let resid: Vec<f64> = p.test.targets.iter().zip(&out.prediction).map(|(y, f)| y - f).collect();
    let mut ood = Vec::new();
    if preset == Preset::Tabular {
        let (_, id_var) = match ens {
            Some(e) => e.ensemble()?.predict(&p.test.features)?,
            None => (vec![], vec![]),
        };
        for kind in ood_kinds(seed) {
            let shifted = perturb(&p.test_raw, kind)?;
            let x = p.standardizer.transform(&shifted.features)?;
            let o = a.predict(net, &x)?;
            let labels: Vec<bool> = (0..2 * out.epistemic.len()).map(|i| i >= out.epistemic.len()).collect();
            let mut push = |method: &str, id: &[f64], sh: &[f64]| -> dido_core::Result<()> {
                let s: Vec<f64> = id.iter().chain(sh).copied().collect();
                ood.push(EvalOod {
                    set: kind.name().into(),
                    method: method.into(),
                    auc: roc_auc(&s, &labels)?,
                    aupr: pr_aupr(&s, &labels)?,
                });
                Ok(())
            };
            push("dido", &out.epistemic, &o.epistemic)?;
            push("sigma_theta1", &out.aleatoric, &o.aleatoric)?;
            if let Some(e) = ens {
                let (_, v) = e.ensemble()?.predict(&x)?;
                push("dens", &id_var, &v)?;
            }
        }
    }
    Ok(EvalReport {
        test: regression_metrics(&out.prediction, &p.test.targets)?,
        aleatoric: MetricsReport::evaluate(&resid, &p.test.targets, &out.aleatoric)?,
        mean_epistemic: out.epistemic.iter().sum::<f64>() / out.epistemic.len() as f64,
        ood,
    })
}

fn flat_csv(r: &EvalReport) -> String {
    let mut rows = vec![
        ("test_mse".to_string(), r.test.mse),
        ("test_mae".into(), r.test.mae),
        ("test_rmse".into(), r.test.rmse),
        ("ause_rel".into(), r.aleatoric.ause_rel),
        ("ause_rmse".into(), r.aleatoric.ause_rmse),
        ("aurg_rel".into(), r.aleatoric.aurg_rel),
        ("aurg_rmse".into(), r.aleatoric.aurg_rmse),
        ("uce".into(), r.aleatoric.uce),
        ("mean_epistemic".into(), r.mean_epistemic),
    ];
    for o in &r.ood {
        rows.push((format!("auc_{}_{}", o.method, o.set), o.auc));
        rows.push((format!("aupr_{}_{}", o.method, o.set), o.aupr));
    }
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
