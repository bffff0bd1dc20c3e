use crate::diffkit::special::{digamma_unchecked, lgamma_unchecked};
use crate::diffkit::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Evidence, concentration `α = e + 1` and strength `S = Σ α` for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletOutput {
    pub evidence: Vec<f64>,
    pub alpha: Vec<f64>,
    pub strength: f64,
}

impl DirichletOutput {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Mean of the Dirichlet, `α / S`.
    pub fn expected_probabilities(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a / self.strength).collect()
    }
}

pub fn evidence_to_alpha(evidence: &[f64]) -> Result<DirichletOutput> {
    if evidence.is_empty() {
        return Err(Error::Contract("empty evidence vector".into()));
    }
    if let Some(bad) = evidence.iter().find(|&&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(Error::Contract(format!("evidence must be finite and non-negative, got {bad}")));
    }
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let strength = alpha.iter().sum();
    Ok(DirichletOutput {
        evidence: evidence.to_vec(),
        alpha,
        strength,
    })
}

/// `K / S`, in `(0, 1]`.
pub fn epistemic_uncertainty(d: &DirichletOutput) -> f64 {
    d.k() as f64 / d.strength
}

/// Index of the largest concentration; ties go to the lowest index.
pub fn aleatoric_from_dirichlet(evidence: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in evidence.iter().enumerate() {
        if e > evidence[best] {
            best = i;
        }
    }
    best
}

fn check_alpha(op: &'static str, alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::Contract(format!("{op}: empty concentration vector")));
    }
    match alpha.iter().find(|&&a| !(a > 0.0) || !a.is_finite()) {
        Some(bad) => Err(Error::domain(op, format!("concentration must be positive, got {bad}"))),
        None => Ok(()),
    }
}

/// `KL(Dir(α) ‖ Dir(1))`.
pub fn kl_dirichlet_to_uniform(alpha: &[f64]) -> Result<f64> {
    check_alpha("kl_dirichlet_to_uniform", alpha)?;
    let k = alpha.len() as f64;
    let s: f64 = alpha.iter().sum();
    let psi_s = digamma_unchecked(s);
    let mut kl = lgamma_unchecked(s) - lgamma_unchecked(k);
    for &a in alpha {
        kl += (a - 1.0) * (digamma_unchecked(a) - psi_s) - lgamma_unchecked(a);
    }
    Ok(kl)
}

/// Log density of `Dir(α)` at a point `π` of the open simplex.
pub fn dirichlet_log_pdf(pi: &[f64], alpha: &[f64]) -> Result<f64> {
    check_alpha("dirichlet_log_pdf", alpha)?;
    if pi.len() != alpha.len() {
        return Err(Error::shape("dirichlet_log_pdf", &[pi.len()], &[alpha.len()]));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 || pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::domain("dirichlet_log_pdf", format!("{pi:?} is not on the open simplex")));
    }
    let s: f64 = alpha.iter().sum();
    let mut lp = lgamma_unchecked(s);
    for (&p, &a) in pi.iter().zip(alpha) {
        lp += (a - 1.0) * p.ln() - lgamma_unchecked(a);
    }
    Ok(lp)
}

/// Row-wise `KL(Dir(α_i) ‖ Dir(1))` of a `[B × K]` concentration node, as `[B × 1]`.
pub fn kl_dirichlet_to_uniform_graph(g: &mut Graph, alpha: Var) -> Result<Var> {
    let k = g.value(alpha).cols();
    let s = g.sum_rows(alpha);
    let lg_s = g.lgamma(s)?;
    let lg_a = g.lgamma(alpha)?;
    let lg_a = g.sum_rows(lg_a);
    let psi_a = g.digamma(alpha)?;
    let a_m1 = g.add_scalar(alpha, -1.0);
    let t = g.mul(a_m1, psi_a)?;
    let t = g.sum_rows(t);
    // Σ (α_k − 1) ψ(S) = (S − K) ψ(S)
    let psi_s = g.digamma(s)?;
    let s_mk = g.add_scalar(s, -(k as f64));
    let u = g.mul(s_mk, psi_s)?;
    let kl = g.sub(lg_s, lg_a)?;
    let kl = g.add_scalar(kl, -lgamma_unchecked(k as f64));
    let kl = g.add(kl, t)?;
    g.sub(kl, u)
}

/// Batch mean of `Σ_k t_k (ψ(S) − ψ(α_k)) + λ KL(Dir(α) ‖ Dir(1))` with
/// `α = e + 1`, for `[B × K]` evidence and targets.
pub fn dido_loss(g: &mut Graph, evidence: Var, targets: Var, lambda: f64) -> Result<Var> {
    if g.shape(evidence) != g.shape(targets) || g.shape(evidence).len() != 2 {
        return Err(Error::shape("dido_loss", g.shape(evidence), g.shape(targets)));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!("lambda must be non-negative, got {lambda}")));
    }
    if let Some(bad) = g.value(evidence).data().iter().find(|&&e| !(e >= 0.0)) {
        return Err(Error::domain("dido_loss", format!("negative evidence {bad}")));
    }
    let alpha = g.add_scalar(evidence, 1.0);
    let s = g.sum_rows(alpha);
    let psi_s = g.digamma(s)?;
    let psi_a = g.digamma(alpha)?;
    let t_sum = g.sum_rows(targets);
    let a = g.mul(t_sum, psi_s)?;
    let b = g.mul(targets, psi_a)?;
    let b = g.sum_rows(b);
    let mut per = g.sub(a, b)?;
    if lambda > 0.0 {
        let kl = kl_dirichlet_to_uniform_graph(g, alpha)?;
        let kl = g.mul_scalar(kl, lambda);
        per = g.add(per, kl)?;
    }
    g.mean(per)
}

/// [`dido_loss`] evaluated outside of a training graph.
pub fn dido_loss_value(evidence: &Tensor, classes: &[usize], lambda: f64) -> Result<f64> {
    let k = evidence.cols();
    if classes.len() != evidence.rows() || classes.iter().any(|&c| c >= k) {
        return Err(Error::Contract("one target class per evidence row, each below K".into()));
    }
    let mut g = Graph::new();
    let e = g.constant(evidence.clone());
    let t = g.constant(super::one_hot(classes, k));
    let l = dido_loss(&mut g, e, t, lambda)?;
    Ok(g.value(l).item())
}

/// `L_aleatoric + L_dido`.
pub fn combined_auxue_loss(g: &mut Graph, aleatoric: Var, dido: Var) -> Result<Var> {
    g.add(aleatoric, dido)
}

pub fn combined_auxue_loss_value(aleatoric: f64, dido: f64) -> Result<f64> {
    if !aleatoric.is_finite() || !dido.is_finite() {
        return Err(Error::domain("combined_auxue_loss", "both losses must be finite"));
    }
    Ok(aleatoric + dido)
}
