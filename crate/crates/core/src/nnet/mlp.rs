use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, CosineSimLayer, Layer, LinearLayer};
use crate::diffkit::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Layer widths (input first) and one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = MlpSpec { widths, activations };
        spec.validate()?;
        Ok(spec)
    }

    /// ReLU hidden layers followed by one output layer with `head`.
    pub fn relu_net(input: usize, hidden: &[usize], output: usize, head: Activation) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(head);
        Self::new(widths, activations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Contract("an MLP needs at least one layer".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(Error::Contract(format!(
                "{} widths need {} activations, got {}",
                self.widths.len(),
                self.widths.len() - 1,
                self.activations.len()
            )));
        }
        if let Some(i) = self.widths.iter().position(|&w| w == 0) {
            return Err(Error::Contract(format!("layer width {i} is zero")));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .zip(&self.activations)
            .map(|(w, a)| match a {
                Activation::Cosine => w[0] * w[1],
                _ => w[0] * w[1] + w[1],
            })
            .sum()
    }
}

/// MLP parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Graph handles produced by [`Mlp::forward`].
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub output: Var,
    /// Input of the last layer.
    pub penultimate: Var,
}

impl Mlp {
    /// He-uniform weights for ReLU layers, Xavier-uniform otherwise, zero
    /// biases. Deterministic in `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .widths
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = match act {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let dist = Uniform::new_inclusive(-bound, bound);
                let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
                let weight = Tensor::matrix(fan_out, fan_in, data).expect("sized");
                match act {
                    Activation::Cosine => Layer::Cosine {
                        layer: CosineSimLayer { weight },
                    },
                    activation => Layer::Linear {
                        layer: LinearLayer {
                            weight,
                            bias: Tensor::zeros(&[fan_out]),
                        },
                        activation,
                    },
                }
            })
            .collect();
        Ok(Mlp {
            spec: spec.clone(),
            layers,
        })
    }

    /// Checks that the stored tensors agree with the spec.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.activations.len() {
            return Err(Error::Contract("layer count disagrees with spec".into()));
        }
        for (i, (layer, w)) in self.layers.iter().zip(self.spec.widths.windows(2)).enumerate() {
            layer.validate()?;
            let kind_ok = matches!(
                (layer, self.spec.activations[i]),
                (Layer::Cosine { .. }, Activation::Cosine)
            ) || matches!(layer, Layer::Linear { activation, .. } if *activation == self.spec.activations[i]);
            if !kind_ok || layer.in_width() != w[0] || layer.out_width() != w[1] {
                return Err(Error::Contract(format!("layer {i} does not match spec {w:?}")));
            }
        }
        if self.params().iter().any(|p| !p.all_finite()) {
            return Err(Error::Contract("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameters in a fixed order: per layer, weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Linear { layer, .. } => {
                    out.push(&layer.weight);
                    out.push(&layer.bias);
                }
                Layer::Cosine { layer } => out.push(&layer.weight),
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Linear { layer, .. } => {
                    out.push(&mut layer.weight);
                    out.push(&mut layer.bias);
                }
                Layer::Cosine { layer } => out.push(&mut layer.weight),
            }
        }
        out
    }

    /// Adds every parameter to `g`, as trainable leaves or as constants.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass of a `[B × in]` batch.
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Forward> {
        let xs = g.shape(x);
        if xs.len() != 2 || xs[1] != self.spec.input_width() {
            return Err(Error::shape("mlp input", xs, &[usize::MAX, self.spec.input_width()]));
        }
        let mut h = x;
        let mut penultimate = x;
        let mut p = params.iter().copied();
        let mut next = || p.next().ok_or_else(|| Error::Contract("too few parameter handles".into()));
        for (i, layer) in self.layers.iter().enumerate() {
            if i + 1 == self.layers.len() {
                penultimate = h;
            }
            h = match layer {
                Layer::Cosine { .. } => {
                    let w = next()?;
                    g.cosine(h, w)?
                }
                Layer::Linear { activation, .. } => {
                    let (w, b) = (next()?, next()?);
                    let z = g.linear(h, w, b)?;
                    match activation {
                        Activation::Identity => z,
                        Activation::Relu => g.relu(z),
                        Activation::Exp => g.exp(z),
                        Activation::Softplus => g.softplus(z),
                        Activation::Cosine => unreachable!("cosine layers are Layer::Cosine"),
                    }
                }
            };
        }
        Ok(Forward {
            output: h,
            penultimate,
        })
    }

    /// Evaluates a `[B × in]` batch without recording gradients.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.predict_with_features(x)?.0)
    }

    /// Output and penultimate-layer features of a `[B × in]` batch.
    pub fn predict_with_features(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let params = self.register(&mut g, false);
        let xv = g.constant(x.clone());
        let f = self.forward(&mut g, &params, xv)?;
        Ok((g.value(f.output).clone(), g.value(f.penultimate).clone()))
    }
}

/// Seeded shuffle of `0..n` split into batches; the last partial batch is kept.
pub fn minibatches<R: Rng>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkit::grad_check;

    #[test]
    fn counting_and_determinism() {
        let spec = MlpSpec::new(vec![2, 3, 1], vec![Activation::Relu, Activation::Identity]).unwrap();
        assert_eq!(spec.param_count(), 13);
        let a = Mlp::init(&spec, 7).unwrap();
        let b = Mlp::init(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 13);
        assert_ne!(a, Mlp::init(&spec, 8).unwrap());
    }

    #[test]
    fn zero_width_rejected() {
        assert!(MlpSpec::new(vec![2, 0, 1], vec![Activation::Relu, Activation::Identity]).is_err());
        assert!(MlpSpec::new(vec![2], vec![]).is_err());
    }

    #[test]
    fn he_bound_respected() {
        let spec = MlpSpec::new(vec![300, 300], vec![Activation::Relu]).unwrap();
        let m = Mlp::init(&spec, 1).unwrap();
        let bound = (6.0_f64 / 300.0).sqrt();
        assert!((bound - 0.1414).abs() < 1e-4);
        let w = m.params()[0];
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        let max = w.data().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(max > 0.9 * bound);
    }

    #[test]
    fn identity_layer_passes_input() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Identity]).unwrap();
        let mut m = Mlp::init(&spec, 0).unwrap();
        let eye = Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        *m.params_mut()[0] = eye;
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 4.0, 9.0]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), x);
    }

    #[test]
    fn exp_head_on_zero_logit() {
        let spec = MlpSpec::new(vec![2, 1], vec![Activation::Exp]).unwrap();
        let mut m = Mlp::init(&spec, 0).unwrap();
        *m.params_mut()[0] = Tensor::zeros(&[1, 2]);
        let y = m.predict(&Tensor::from_rows(&[vec![3.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0]);
    }

    #[test]
    fn zero_input_follows_bias_path() {
        // 1 → 2 → 2 → 1 ReLU net with hand-set biases; on x = 0 only biases matter.
        let spec = MlpSpec::relu_net(1, &[2, 2], 1, Activation::Identity).unwrap();
        let mut m = Mlp::init(&spec, 3).unwrap();
        let p = m.params_mut();
        let [w0, b0, w1, b1, w2, b2] = <[&mut Tensor; 6]>::try_from(p).unwrap();
        let _ = w0;
        *b0 = Tensor::vector(vec![0.5, -1.0]);
        *w1 = Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, 3.0]).unwrap();
        *b1 = Tensor::vector(vec![0.25, 0.0]);
        *w2 = Tensor::matrix(1, 2, vec![2.0, 5.0]).unwrap();
        *b2 = Tensor::vector(vec![-0.1]);
        // h0 = relu([0.5, -1]) = [0.5, 0]; h1 = relu([0.5 + 0.25, -0.5]) = [0.75, 0];
        // y = 2 * 0.75 - 0.1 = 1.4
        let y = m.predict(&Tensor::zeros(&[1, 1])).unwrap();
        assert!((y.item() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_is_structured() {
        let spec = MlpSpec::relu_net(3, &[4], 1, Activation::Identity).unwrap();
        let m = Mlp::init(&spec, 0).unwrap();
        assert!(matches!(m.predict(&Tensor::zeros(&[2, 2])), Err(Error::Shape { .. })));
    }

    #[test]
    fn penultimate_width() {
        let spec = MlpSpec::relu_net(1, &[8, 6], 1, Activation::Identity).unwrap();
        let m = Mlp::init(&spec, 0).unwrap();
        let (y, f) = m.predict_with_features(&Tensor::zeros(&[5, 1])).unwrap();
        assert_eq!(y.shape(), &[5, 1]);
        assert_eq!(f.shape(), &[5, 6]);
    }

    #[test]
    fn mlp_gradients_pass_check() {
        let spec = MlpSpec::new(
            vec![3, 4, 5, 2],
            vec![Activation::Softplus, Activation::Cosine, Activation::Exp],
        )
        .unwrap();
        let m = Mlp::init(&spec, 11).unwrap();
        let x = Tensor::from_rows(&[vec![0.2, -1.0, 0.7], vec![1.3, 0.4, -0.6]]).unwrap();
        let theta: Vec<Tensor> = m.params().into_iter().cloned().collect();
        let err = grad_check(
            |g, vars| {
                let xv = g.constant(x.clone());
                let f = m.forward(g, vars, xv)?;
                g.mean(f.output)
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn batches_cover_everything_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = minibatches(10, 4, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
