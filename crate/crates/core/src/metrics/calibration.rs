use crate::error::{Error, Result};

/// Uncertainty calibration error.
///
/// Items are binned by predicted uncertainty into `n_bins` equal-width bins
/// over `[min, max]`; each bin contributes `|b|/N · |mean error − mean
/// uncertainty|`. The top bin is closed.
pub fn uce(errors: &[f64], uncertainties: &[f64], n_bins: usize) -> Result<f64> {
    if errors.len() != uncertainties.len() {
        return Err(Error::shape("uce", &[errors.len()], &[uncertainties.len()]));
    }
    if errors.is_empty() {
        return Err(Error::Contract("uce of an empty set".into()));
    }
    if n_bins < 2 {
        return Err(Error::Contract(format!("uce needs at least 2 bins, got {n_bins}")));
    }
    if errors.iter().chain(uncertainties).any(|v| !v.is_finite()) {
        return Err(Error::domain("uce", "non-finite input"));
    }
    let lo = uncertainties.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = uncertainties.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;

    let mut count = vec![0usize; n_bins];
    let mut err_sum = vec![0.0; n_bins];
    let mut unc_sum = vec![0.0; n_bins];
    for (&e, &u) in errors.iter().zip(uncertainties) {
        let b = if width > 0.0 {
            (((u - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        count[b] += 1;
        err_sum[b] += e;
        unc_sum[b] += u;
    }
    let n = errors.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            c / n * (err_sum[b] / c - unc_sum[b] / c).abs()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_calibration() {
        let v = [0.1, 0.5, 2.0, 3.3, 0.7];
        assert!(uce(&v, &v, 15).unwrap() < 1e-15);
    }

    #[test]
    fn single_populated_bin() {
        assert_eq!(uce(&[1.0, 3.0], &[5.0, 5.0], 15).unwrap(), 3.0);
    }

    #[test]
    fn two_bins_by_hand() {
        // bins [0, 1) and [1, 2]: {0, 0.5} and {2}
        let u = [0.0, 0.5, 2.0];
        let e = [1.0, 0.0, 2.5];
        let want = 2.0 / 3.0 * (0.5f64 - 0.25).abs() + 1.0 / 3.0 * 0.5;
        assert!((uce(&e, &u, 2).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn shape_and_bins() {
        assert!(uce(&[1.0], &[1.0, 2.0], 15).is_err());
        assert!(uce(&[1.0], &[1.0], 1).is_err());
    }
}
