use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RegressionDataset;
use crate::diffkit::Tensor;
use crate::error::{Error, Result};

/// The two synthetic 1D layouts: `y = 10 sin x + ε` with noise three times
/// larger on the left segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyVariant {
    /// x ~ U[−3, 3]; std 3 on [−3, 0), 1 on [0, 3].
    A,
    /// x ~ U([−3, −1] ∪ [3, 5]); std 3 on the left piece, 1 on the right.
    B,
}

impl std::str::FromStr for ToyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" | "toy-a" => Ok(ToyVariant::A),
            "b" | "B" | "toy-b" => Ok(ToyVariant::B),
            _ => Err(Error::Contract(format!("unknown toy variant `{s}`"))),
        }
    }
}

/// Ground-truth noise std at `x` (zero outside the training support).
pub fn toy_noise_std(variant: ToyVariant, x: f64) -> f64 {
    match variant {
        ToyVariant::A if (-3.0..0.0).contains(&x) => 3.0,
        ToyVariant::A if (0.0..=3.0).contains(&x) => 1.0,
        ToyVariant::B if (-3.0..=-1.0).contains(&x) => 3.0,
        ToyVariant::B if (3.0..=5.0).contains(&x) => 1.0,
        _ => 0.0,
    }
}

pub fn gen_toy(variant: ToyVariant, n: usize, seed: u64) -> Result<RegressionDataset> {
    if n < 10 {
        return Err(Error::Contract(format!("toy dataset needs n ≥ 10, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = match variant {
            ToyVariant::A => rng.gen_range(-3.0..=3.0),
            ToyVariant::B => {
                let u: f64 = rng.gen_range(0.0..4.0);
                if u < 2.0 {
                    -3.0 + u
                } else {
                    1.0 + u
                }
            }
        };
        let eps = toy_noise_std(variant, x) * unit.sample(&mut rng);
        xs.push(x);
        ys.push(10.0 * x.sin() + eps);
    }
    RegressionDataset::new(Tensor::column(xs), ys)
}
