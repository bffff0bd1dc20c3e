use serde::{Deserialize, Serialize};

use crate::diffkit::{Graph, Tensor};
use crate::error::{Error, Result};

/// Per-layer activation tag. `Cosine` marks a cosine-similarity layer, which
/// has no bias and no further nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Exp,
    Softplus,
    Cosine,
}

/// Fully connected layer, `y = x Wᵀ + b` with `W: [out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `y_j = (w_j · x) / (max(|w_j|, ε) · max(|x|, ε))` with `W: [out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineSimLayer {
    pub weight: Tensor,
}

impl CosineSimLayer {
    /// Evaluates the layer on a `[B × in]` batch outside of any training graph.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let w = g.constant(self.weight.clone());
        let y = g.cosine(xv, w)?;
        Ok(g.value(y).clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Layer {
    Linear {
        #[serde(flatten)]
        layer: LinearLayer,
        activation: Activation,
    },
    Cosine {
        #[serde(flatten)]
        layer: CosineSimLayer,
    },
}

impl Layer {
    pub fn in_width(&self) -> usize {
        match self {
            Layer::Linear { layer, .. } => layer.weight.cols(),
            Layer::Cosine { layer } => layer.weight.cols(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Layer::Linear { layer, .. } => layer.weight.rows(),
            Layer::Cosine { layer } => layer.weight.rows(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Layer::Linear { layer, .. } => {
                if layer.weight.shape().len() != 2 || layer.bias.len() != layer.weight.rows() {
                    return Err(Error::shape("linear layer", layer.weight.shape(), layer.bias.shape()));
                }
            }
            Layer::Cosine { layer } => {
                if layer.weight.shape().len() != 2 {
                    return Err(Error::Contract("cosine weight must be a matrix".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(rows: &[Vec<f64>]) -> CosineSimLayer {
        CosineSimLayer {
            weight: Tensor::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let l = layer(&[vec![1.0, 2.0, -0.5], vec![2.0, -1.0, 0.0]]);
        let x = Tensor::from_rows(&[vec![1.0, 2.0, -0.5]]).unwrap();
        let y = l.forward(&x).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1].abs() < 1e-12);
    }

    #[test]
    fn scale_invariant_and_bounded() {
        let l = layer(&[vec![0.3, -0.7], vec![1.5, 0.2], vec![-2.0, -2.0]]);
        let x = Tensor::from_rows(&[vec![0.4, 1.1], vec![-3.0, 0.5]]).unwrap();
        let x10 = x.map(|v| v * 10.0);
        let (a, b) = (l.forward(&x).unwrap(), l.forward(&x10).unwrap());
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-9);
            assert!((-1.0..=1.0).contains(p));
        }
    }

    #[test]
    fn zero_input_is_guarded() {
        let l = layer(&[vec![1.0, 1.0]]);
        let y = l.forward(&Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }
}
