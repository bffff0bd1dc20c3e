//! Negative log-likelihoods for the aleatoric head, plus MSE for the main task.
//!
//! Every loss takes the residual `r = y - f(x)` as a `[B × 1]` node and the
//! head's distribution parameters as `[B × 1]` nodes, and returns the batch
//! mean as a single-element node.

use serde::{Deserialize, Serialize};

use crate::diffkit::special::lgamma_unchecked;
use crate::diffkit::{Graph, Var};
use crate::error::{Error, Result};

/// Default weight of the NIG evidence regularizer.
pub const LAMBDA_NIG: f64 = 0.01;

/// Distribution assumed for the heteroscedastic noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AleatoricKind {
    /// Parameter: variance σ.
    Gaussian,
    /// Parameter: scale b.
    #[default]
    Laplace,
    /// Parameters: scale α̂, shape β̂.
    Ggau,
    /// Parameters: ν, α, β.
    Nig,
}

impl AleatoricKind {
    pub fn n_params(self) -> usize {
        match self {
            AleatoricKind::Gaussian | AleatoricKind::Laplace => 1,
            AleatoricKind::Ggau => 2,
            AleatoricKind::Nig => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AleatoricKind::Gaussian => "gaussian",
            AleatoricKind::Laplace => "laplace",
            AleatoricKind::Ggau => "ggau",
            AleatoricKind::Nig => "nig",
        }
    }

    /// NLL of a `[B × n_params]` head output.
    pub fn loss(self, g: &mut Graph, head: Var, resid: Var, lambda_nig: f64) -> Result<Var> {
        let cols = g.shape(head).get(1).copied().unwrap_or(1);
        if cols != self.n_params() {
            return Err(Error::shape("aleatoric head", g.shape(head), &[usize::MAX, self.n_params()]));
        }
        match self {
            AleatoricKind::Gaussian => gaussian_nll(g, head, resid),
            AleatoricKind::Laplace => laplace_nll(g, head, resid),
            AleatoricKind::Ggau => {
                let a = g.column(head, 0)?;
                let b = g.column(head, 1)?;
                ggau_nll(g, a, b, resid)
            }
            AleatoricKind::Nig => {
                let nu = g.column(head, 0)?;
                let alpha = g.column(head, 1)?;
                let beta = g.column(head, 2)?;
                nig_nll(g, nu, alpha, beta, resid, lambda_nig)
            }
        }
    }

    /// Noise scale read off one row of head output, used as the aleatoric
    /// uncertainty score: the standard deviation of the fitted noise law
    /// (for NIG, the square root of the inverse-gamma mode `β / (α + 1)`).
    pub fn uncertainty(self, params: &[f64]) -> f64 {
        match self {
            AleatoricKind::Gaussian => params[0].sqrt(),
            AleatoricKind::Laplace => std::f64::consts::SQRT_2 * params[0],
            AleatoricKind::Ggau => {
                let (a, b) = (params[0], params[1]);
                a * (0.5 * (lgamma_unchecked(3.0 / b) - lgamma_unchecked(1.0 / b))).exp()
            }
            AleatoricKind::Nig => (params[2] / (params[1] + 1.0)).sqrt(),
        }
    }
}

impl std::str::FromStr for AleatoricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(AleatoricKind::Gaussian),
            "laplace" => Ok(AleatoricKind::Laplace),
            "ggau" => Ok(AleatoricKind::Ggau),
            "nig" => Ok(AleatoricKind::Nig),
            other => Err(Error::Contract(format!("unknown distribution `{other}`"))),
        }
    }
}

fn ensure_positive(g: &Graph, v: Var, op: &'static str, name: &str) -> Result<()> {
    match g.value(v).data().iter().find(|&&x| !(x > 0.0)) {
        Some(bad) => Err(Error::domain(op, format!("{name} must be positive, got {bad}"))),
        None => Ok(()),
    }
}

fn same_shape(g: &Graph, a: Var, b: Var, op: &'static str) -> Result<()> {
    if g.shape(a) == g.shape(b) {
        Ok(())
    } else {
        Err(Error::shape(op, g.shape(a), g.shape(b)))
    }
}

/// Mean of squared residuals.
pub fn mse_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target, "mse_loss")?;
    let r = g.sub(pred, target)?;
    let sq = g.mul(r, r)?;
    g.mean(sq)
}

/// `mean(½ log σ + r² / (2σ))`, with σ the variance.
pub fn gaussian_nll(g: &mut Graph, var: Var, resid: Var) -> Result<Var> {
    same_shape(g, var, resid, "gaussian_nll")?;
    ensure_positive(g, var, "gaussian_nll", "variance")?;
    let log_var = g.log(var)?;
    let a = g.mul_scalar(log_var, 0.5);
    let r2 = g.mul(resid, resid)?;
    let q = g.div(r2, var)?;
    let b = g.mul_scalar(q, 0.5);
    let per = g.add(a, b)?;
    g.mean(per)
}

/// `mean(log(2b) + |r| / b)`.
pub fn laplace_nll(g: &mut Graph, scale: Var, resid: Var) -> Result<Var> {
    same_shape(g, scale, resid, "laplace_nll")?;
    ensure_positive(g, scale, "laplace_nll", "scale")?;
    let two_b = g.mul_scalar(scale, 2.0);
    let a = g.log(two_b)?;
    let abs_r = g.abs(resid);
    let b = g.div(abs_r, scale)?;
    let per = g.add(a, b)?;
    g.mean(per)
}

/// `mean((|r| / α̂)^β̂ - log(β̂ / α̂) + log Γ(1 / β̂))`.
pub fn ggau_nll(g: &mut Graph, scale: Var, shape: Var, resid: Var) -> Result<Var> {
    same_shape(g, scale, resid, "ggau_nll")?;
    same_shape(g, shape, resid, "ggau_nll")?;
    ensure_positive(g, scale, "ggau_nll", "scale")?;
    ensure_positive(g, shape, "ggau_nll", "shape")?;
    let abs_r = g.abs(resid);
    let ratio = g.div(abs_r, scale)?;
    let powered = g.pow(ratio, shape)?;
    let log_shape = g.log(shape)?;
    let log_scale = g.log(scale)?;
    let log_ratio = g.sub(log_shape, log_scale)?;
    let inv_shape = g.powf(shape, -1.0)?;
    let lg = g.lgamma(inv_shape)?;
    let t = g.sub(powered, log_ratio)?;
    let per = g.add(t, lg)?;
    g.mean(per)
}

/// Normal-inverse-gamma NLL plus `λ_NIG · mean(|r| (2ν + α))`, where
/// `Ω = 2β(1 + ν)`.
pub fn nig_nll(
    g: &mut Graph,
    nu: Var,
    alpha: Var,
    beta: Var,
    resid: Var,
    lambda_nig: f64,
) -> Result<Var> {
    for (v, name) in [(nu, "nu"), (alpha, "alpha"), (beta, "beta")] {
        same_shape(g, v, resid, "nig_nll")?;
        ensure_positive(g, v, "nig_nll", name)?;
    }
    if g.value(alpha).data().iter().any(|&a| a <= 0.5) {
        log::warn!("nig_nll: alpha <= 0.5 gives an improper predictive; loss is still evaluated");
    }
    // Ω = 2β(1 + ν)
    let one_nu = g.add_scalar(nu, 1.0);
    let omega = g.mul(beta, one_nu)?;
    let omega = g.mul_scalar(omega, 2.0);

    // ½ log(π / ν) = ½ log π − ½ log ν
    let log_nu = g.log(nu)?;
    let t1 = g.mul_scalar(log_nu, -0.5);
    let t1 = g.add_scalar(t1, 0.5 * std::f64::consts::PI.ln());

    // − α log Ω
    let log_omega = g.log(omega)?;
    let t2 = g.mul(alpha, log_omega)?;

    // (α + ½) log(r² ν + Ω)
    let r2 = g.mul(resid, resid)?;
    let r2nu = g.mul(r2, nu)?;
    let inner = g.add(r2nu, omega)?;
    let log_inner = g.log(inner)?;
    let a_half = g.add_scalar(alpha, 0.5);
    let t3 = g.mul(a_half, log_inner)?;

    // log Γ(α) − log Γ(α + ½)
    let lg_a = g.lgamma(alpha)?;
    let lg_ah = g.lgamma(a_half)?;
    let t4 = g.sub(lg_a, lg_ah)?;

    let l1 = g.sub(t1, t2)?;
    let l1 = g.add(l1, t3)?;
    let l1 = g.add(l1, t4)?;
    let l1 = g.mean(l1)?;

    if lambda_nig == 0.0 {
        return Ok(l1);
    }
    let abs_r = g.abs(resid);
    let two_nu = g.mul_scalar(nu, 2.0);
    let w = g.add(two_nu, alpha)?;
    let l2 = g.mul(abs_r, w)?;
    let l2 = g.mean(l2)?;
    let l2 = g.mul_scalar(l2, lambda_nig);
    g.add(l1, l2)
}
