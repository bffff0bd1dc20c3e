use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, AuxInput, AuxueConfig, MainConfig, TrainSpec};
use crate::datagen::RegressionDataset;
use crate::diffkit::{Graph, Tensor, Var};
use crate::dido::{combined_auxue_loss, dido_loss, dido_loss_value, DiscretizationSpec};
use crate::distloss::{mse_loss, AleatoricKind, LAMBDA_NIG};
use crate::error::{Error, Result};
use crate::nnet::{minibatches, Activation, AdamState, Layer, Mlp, MlpSpec};
use crate::par::{self, Exec};

pub(crate) const SEED_MAIN_INIT: u64 = 1;
pub(crate) const SEED_MAIN_BATCHES: u64 = 2;
pub(crate) const SEED_THETA1_INIT: u64 = 3;
pub(crate) const SEED_THETA2_INIT: u64 = 4;
pub(crate) const SEED_AUX_BATCHES: u64 = 5;
pub(crate) const SEED_ENSEMBLE: u64 = 100;

fn diverged(label: &str, epoch: usize, batch: usize, detail: impl ToString) -> Error {
    Error::Divergence {
        loss: label.to_string(),
        epoch,
        batch,
        detail: detail.to_string(),
    }
}

/// Minibatch Adam over the parameters of `nets`, jointly.
///
/// `batch_loss` builds the scalar loss of one batch given the networks, their
/// registered parameter handles and the row indices. Returns the mean loss of
/// each epoch.
fn fit<F>(nets: &mut [&mut Mlp], n: usize, spec: &TrainSpec, seed: u64, label: &str, mut batch_loss: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut Graph, &[&Mlp], &[Vec<Var>], &[usize]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = {
        let params: Vec<&Tensor> = nets.iter().flat_map(|m| m.params()).collect();
        AdamState::new(spec.lr, &params)
    };
    let mut history = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        let mut total = 0.0;
        for (b, idx) in minibatches(n, spec.batch, &mut rng).iter().enumerate() {
            let mut g = Graph::new();
            let views: Vec<&Mlp> = nets.iter().map(|m| &**m).collect();
            let vars: Vec<Vec<Var>> = views.iter().map(|m| m.register(&mut g, true)).collect();
            let loss = batch_loss(&mut g, &views, &vars, idx).map_err(|e| match e {
                Error::Domain { .. } => diverged(label, epoch, b, e),
                e => e,
            })?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(diverged(label, epoch, b, format!("loss is {value}")));
            }
            let grads = g.backward(loss)?;
            let grads: Vec<Tensor> = vars.iter().flatten().map(|&v| grads.get_or_zeros(v, g.shape(v))).collect();
            let mut params: Vec<&mut Tensor> = nets.iter_mut().flat_map(|m| m.params_mut()).collect();
            adam.step(&mut params, &grads).map_err(|e| diverged(label, epoch, b, e))?;
            total += value * idx.len() as f64;
        }
        history.push(total / n as f64);
        log::debug!("{label} epoch {epoch}: loss {:.6}", total / n as f64);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn regression_metrics(pred: &[f64], y: &[f64]) -> Result<RegressionMetrics> {
    if pred.len() != y.len() || y.is_empty() {
        return Err(Error::shape("regression_metrics", &[pred.len()], &[y.len()]));
    }
    let n = y.len() as f64;
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let mae = pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(RegressionMetrics {
        mse,
        mae,
        rmse: mse.sqrt(),
    })
}

/// A trained main-task regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainModel {
    pub net: Mlp,
    pub train_history: Vec<f64>,
    pub val_mse: Option<f64>,
}

impl MainModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.predict(x)?.into_data())
    }
}

pub fn train_main(
    cfg: &MainConfig,
    train: &RegressionDataset,
    val: Option<&RegressionDataset>,
    seed: u64,
) -> Result<MainModel> {
    let spec = MlpSpec::relu_net(train.n_features(), &cfg.hidden, 1, Activation::Identity)?;
    let mut net = Mlp::init(&spec, derive_seed(seed, SEED_MAIN_INIT))?;
    let y = train.target_column();
    let history = fit(
        &mut [&mut net],
        train.len(),
        &cfg.train,
        derive_seed(seed, SEED_MAIN_BATCHES),
        "main mse",
        |g, nets, vars, idx| {
            let x = g.constant(train.features.select_rows(idx));
            let t = g.constant(y.select_rows(idx));
            let out = nets[0].forward(g, &vars[0], x)?.output;
            mse_loss(g, out, t)
        },
    )?;
    let val_mse = match val {
        Some(v) => Some(regression_metrics(&net.predict(&v.features)?.into_data(), &v.targets)?.mse),
        None => None,
    };
    log::info!(
        "main model seed {seed}: train mse {:.4}, val mse {val_mse:?}",
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(MainModel {
        net,
        train_history: history,
        val_mse,
    })
}

/// Inputs seen by the AuxUE: penultimate activations of the main model, or
/// the raw features. No gradient flows back into the main model.
pub fn extract_features(g: &mut Graph, main: &Mlp, main_params: &[Var], x: Var, input: AuxInput) -> Result<Var> {
    match input {
        AuxInput::Penultimate => {
            let f = main.forward(g, main_params, x)?;
            Ok(g.detach(f.penultimate))
        }
        AuxInput::Raw { .. } => Ok(g.detach(x)),
    }
}

/// Auxiliary uncertainty estimator: `σ_Θ1` for aleatoric noise parameters
/// and `σ_Θ2` for Dirichlet evidence over discretized errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxUe {
    pub input: AuxInput,
    pub dist: AleatoricKind,
    pub lambda: f64,
    pub theta1: Mlp,
    pub theta2: Mlp,
    pub discretization: DiscretizationSpec,
    pub train_history: Vec<f64>,
    /// DIDO loss on the training set before the first update.
    pub initial_dido_loss: f64,
}

/// Per-input outputs of a main model plus its AuxUE.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyOutput {
    pub prediction: Vec<f64>,
    pub aleatoric_params: Tensor,
    /// Noise scale read off `aleatoric_params`.
    pub aleatoric: Vec<f64>,
    pub evidence: Tensor,
    /// `K / S`.
    pub epistemic: Vec<f64>,
}

fn auxue_specs(cfg: &AuxueConfig, in_width: usize) -> Result<(MlpSpec, MlpSpec)> {
    let p = cfg.dist.n_params();
    let (k, h) = (cfg.k, cfg.hidden);
    use Activation::{Cosine, Exp, Relu};
    match cfg.input {
        AuxInput::Penultimate => Ok((
            MlpSpec::new(vec![in_width, p], vec![Exp])?,
            MlpSpec::new(vec![in_width, h, h, k], vec![Cosine, Relu, Exp])?,
        )),
        AuxInput::Raw { extractor: e } => Ok((
            MlpSpec::new(vec![in_width, e, p], vec![Relu, Exp])?,
            MlpSpec::new(vec![in_width, e, h, h, k], vec![Relu, Cosine, Relu, Exp])?,
        )),
    }
}

/// Zero weights and a constant bias in the last layer.
fn reset_head(net: &mut Mlp, bias: f64) {
    if let Some(Layer::Linear { layer, .. }) = net.layers.last_mut() {
        layer.weight.data_mut().fill(0.0);
        layer.bias.data_mut().fill(bias);
    }
}

impl AuxUe {
    pub fn k(&self) -> usize {
        self.discretization.k()
    }

    pub fn features(&self, main: &Mlp, x: &Tensor) -> Result<Tensor> {
        match self.input {
            AuxInput::Penultimate => Ok(main.predict_with_features(x)?.1),
            AuxInput::Raw { .. } => Ok(x.clone()),
        }
    }

    pub fn predict(&self, main: &Mlp, x: &Tensor) -> Result<UncertaintyOutput> {
        let (pred, penultimate) = main.predict_with_features(x)?;
        let feats = match self.input {
            AuxInput::Penultimate => penultimate,
            AuxInput::Raw { .. } => x.clone(),
        };
        let params = self.theta1.predict(&feats)?;
        let evidence = self.theta2.predict(&feats)?;
        let p = self.dist.n_params();
        let aleatoric = params.data().chunks(p).map(|row| self.dist.uncertainty(row)).collect();
        let k = self.k() as f64;
        let epistemic = evidence
            .data()
            .chunks(self.k())
            .map(|e| k / (k + e.iter().sum::<f64>()))
            .collect();
        Ok(UncertaintyOutput {
            prediction: pred.into_data(),
            aleatoric_params: params,
            aleatoric,
            evidence,
            epistemic,
        })
    }
}

/// Fits the discretization on the training errors of the frozen `main`
/// model, then trains `σ_Θ1` and `σ_Θ2` jointly on
/// `L_aleatoric + L_dido`.
pub fn train_auxue(cfg: &AuxueConfig, main: &Mlp, train: &RegressionDataset, seed: u64) -> Result<AuxUe> {
    let pred = main.predict(&train.features)?.into_data();
    let resid: Vec<f64> = train.targets.iter().zip(&pred).map(|(y, p)| y - p).collect();
    let abs_err: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    let discretization = DiscretizationSpec::fit(&abs_err, cfg.k)?;
    let targets = discretization.one_hot(&abs_err);
    let resid = Tensor::column(resid);

    let feats = match cfg.input {
        AuxInput::Penultimate => main.predict_with_features(&train.features)?.1,
        AuxInput::Raw { .. } => train.features.clone(),
    };
    let (spec1, spec2) = auxue_specs(cfg, feats.cols())?;
    let mut theta1 = Mlp::init(&spec1, derive_seed(seed, SEED_THETA1_INIT))?;
    let mut theta2 = Mlp::init(&spec2, derive_seed(seed, SEED_THETA2_INIT))?;
    reset_head(&mut theta1, 0.0);
    reset_head(&mut theta2, cfg.evidence_bias);

    let initial_dido_loss = dido_loss_value(
        &theta2.predict(&feats)?,
        &discretization.assign(&abs_err),
        0.0,
    )?;
    let (dist, lambda) = (cfg.dist, cfg.lambda);
    let history = fit(
        &mut [&mut theta1, &mut theta2],
        train.len(),
        &cfg.train,
        derive_seed(seed, SEED_AUX_BATCHES),
        "auxue",
        |g, nets, vars, idx| {
            let f = g.constant(feats.select_rows(idx));
            let r = g.constant(resid.select_rows(idx));
            let t = g.constant(targets.select_rows(idx));
            let head = nets[0].forward(g, &vars[0], f)?.output;
            let la = dist.loss(g, head, r, LAMBDA_NIG)?;
            let e = nets[1].forward(g, &vars[1], f)?.output;
            let ld = dido_loss(g, e, t, lambda)?;
            combined_auxue_loss(g, la, ld)
        },
    )?;
    log::info!(
        "auxue seed {seed}: initial dido {initial_dido_loss:.4}, final loss {:.4}",
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(AuxUe {
        input: cfg.input,
        dist,
        lambda,
        theta1,
        theta2,
        discretization,
        train_history: history,
        initial_dido_loss,
    })
}

/// Independently trained main-task models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<Mlp>,
}

impl Ensemble {
    /// Member-mean prediction and the population variance across members.
    pub fn predict(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let preds = self
            .members
            .iter()
            .map(|m| Ok(m.predict(x)?.into_data()))
            .collect::<Result<Vec<_>>>()?;
        let m = preds.len() as f64;
        let n = x.rows();
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for i in 0..n {
            mean[i] = preds.iter().map(|p| p[i]).sum::<f64>() / m;
            // Σ_{a<b} (p_a − p_b)² / m², exactly zero when members agree
            let mut s = 0.0;
            for a in 0..preds.len() {
                for b in a + 1..preds.len() {
                    s += (preds[a][i] - preds[b][i]).powi(2);
                }
            }
            var[i] = s / (m * m);
        }
        Ok((mean, var))
    }
}

/// Seeds of ensemble members; member 0 shares the main model's seed.
pub fn ensemble_seeds(seed: u64, m: usize) -> Vec<u64> {
    (0..m as u64)
        .map(|i| if i == 0 { seed } else { derive_seed(seed, SEED_ENSEMBLE + i) })
        .collect()
}

pub fn train_ensemble(
    cfg: &MainConfig,
    train: &RegressionDataset,
    member_seeds: &[u64],
    exec: Exec,
) -> Result<Ensemble> {
    if member_seeds.len() < 2 {
        return Err(Error::Contract(format!(
            "an ensemble needs at least 2 members, got {}",
            member_seeds.len()
        )));
    }
    let members = par::try_map(exec, member_seeds, |&s| {
        train_main(cfg, train, None, s).map(|m| m.net)
    })?;
    Ok(Ensemble { members })
}
