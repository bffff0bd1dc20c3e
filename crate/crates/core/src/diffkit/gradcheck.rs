use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of `f` at `theta` with central differences.
///
/// `f` receives a fresh graph and one trainable leaf per tensor in `theta`,
/// and must return a single-element node. The result is the maximum over all
/// coordinates of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, theta: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |point: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
        let root = f(&mut g, &vars)?;
        let v = g.value(root).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::domain("grad_check", format!("objective is {v} at probe point")))
        }
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = theta.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    let grads = g.backward(root)?;

    let mut worst = 0.0_f64;
    let mut probe: Vec<Tensor> = theta.to_vec();
    for (p, (&var, base)) in vars.iter().zip(theta).enumerate() {
        let analytic = grads.get_or_zeros(var, base.shape());
        for i in 0..base.len() {
            let orig = base.data()[i];
            probe[p].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[p].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
