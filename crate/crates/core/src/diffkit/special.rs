//! Log-gamma, digamma and trigamma on the positive real axis.
//!
//! All three shift the argument upward with the recurrence
//! `f(x) = f(x + 1) - g(x)` until it is large enough for the asymptotic
//! (Stirling / Bernoulli) series, then sum the series. Non-positive arguments
//! are rejected; the reflection formula is not implemented.

use crate::error::{Error, Result};

/// B_{2k} for k = 1..=8.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Smallest argument at which the Stirling series for log-gamma is used.
const LGAMMA_SHIFT: f64 = 10.0;
/// Smallest argument at which the digamma/trigamma series are used.
const PSI_SHIFT: f64 = 6.0;

fn check(op: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("argument must be positive and finite, got {x}")))
    }
}

/// `log Γ(x)` for `x > 0`.
pub fn lgamma(x: f64) -> Result<f64> {
    check("lgamma", x)?;
    Ok(lgamma_unchecked(x))
}

/// `ψ(x) = d/dx log Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// `ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn lgamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < LGAMMA_SHIFT {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Σ B_{2k} / (2k (2k-1) z^{2k-1}), Horner in 1/z².
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate().rev() {
        let n = 2.0 * (k as f64 + 1.0);
        series = series * inv2 + b / (n * (n - 1.0));
    }
    series *= inv;
    let stirling = (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series;
    if prod == 1.0 {
        stirling
    } else {
        stirling - prod.ln()
    }
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut shift = 0.0;
    while z < PSI_SHIFT {
        shift += 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    // Σ B_{2k} / (2k z^{2k})
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate().rev() {
        let n = 2.0 * (k as f64 + 1.0);
        series = series * inv2 + b / n;
    }
    series *= inv2;
    z.ln() - 0.5 / z - series - shift
}

pub(crate) fn trigamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut shift = 0.0;
    while z < PSI_SHIFT {
        shift += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // 1/z + 1/(2z²) + Σ B_{2k} / z^{2k+1}
    let mut series = 0.0;
    for b in BERNOULLI.iter().rev() {
        series = series * inv2 + b;
    }
    series *= inv2 * inv;
    inv + 0.5 * inv2 + series + shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive() {
        for bad in [0.0, -1.0, -0.5, f64::NAN, f64::INFINITY] {
            assert!(lgamma(bad).is_err());
            assert!(digamma(bad).is_err());
            assert!(trigamma(bad).is_err());
        }
    }

    #[test]
    fn known_values() {
        assert_eq!(lgamma(1.0).unwrap(), 0.0);
        assert!((lgamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-12);
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-12);
        assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-12);
        // ψ'(1) = π²/6
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0).unwrap() - pi2_6).abs() < 1e-10);
    }

    #[test]
    fn recurrence_holds() {
        let mut x = 0.1;
        while x <= 50.0 {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((lhs - 1.0 / x).abs() < 1e-10, "x = {x}");
            x += 0.37;
        }
    }

    #[test]
    fn factorials() {
        let mut fact = 1.0_f64;
        for n in 0..=15u32 {
            if n > 0 {
                fact *= f64::from(n);
            }
            let got = lgamma(f64::from(n) + 1.0).unwrap().exp();
            assert!((got - fact).abs() / fact < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn derivative_chain_matches_finite_differences() {
        let h = 1e-5;
        for &x in &[0.3, 1.0, 2.5, 7.0, 40.0] {
            let fd = (lgamma(x + h).unwrap() - lgamma(x - h).unwrap()) / (2.0 * h);
            assert!((fd - digamma(x).unwrap()).abs() < 1e-7 * fd.abs().max(1.0));
            let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
            assert!((fd - trigamma(x).unwrap()).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
