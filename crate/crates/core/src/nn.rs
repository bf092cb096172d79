//! Fully connected layers with hand-written backward passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Trans};
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `y = activation(x Wᵀ + b)`, with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Parameter gradients of one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(
                "DenseLayer::new",
                format!("bias of length {}", weight.rows()),
                bias.len(),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
            activation,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(input: usize, output: usize, activation: Activation, rng: &mut RunRng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut weight = Matrix::zeros(output, input);
        for w in weight.as_mut_slice() {
            *w = rng.uniform_range(-limit, limit);
        }
        Self {
            weight,
            bias: vec![0.0; output],
            activation,
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "dense_forward",
                format!("{} input columns", self.input_dim()),
                x.cols(),
            ));
        }
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        for i in 0..out.rows() {
            out.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, Trans::No, &self.weight, Trans::Yes, 1.0, &mut out);
        if self.activation != Activation::Identity {
            let act = self.activation;
            for v in out.as_mut_slice() {
                *v = act.apply(*v);
            }
        }
        Ok(out)
    }

    /// Gradients of the forward map given its input `x`, its output `y`
    /// and the gradient w.r.t. `y`.
    ///
    /// When `need_input_grad` is false the returned input gradient is `None`
    /// and its matrix product is skipped.
    pub fn backward(
        &self,
        x: &Matrix,
        y: &Matrix,
        upstream: &Matrix,
        need_input_grad: bool,
    ) -> Result<(DenseGrads, Option<Matrix>)> {
        if x.cols() != self.input_dim()
            || y.shape() != (x.rows(), self.output_dim())
            || upstream.shape() != y.shape()
        {
            return Err(Error::shape(
                "dense_backward",
                format!(
                    "x {}x{}, y/upstream {}x{}",
                    x.rows(),
                    self.input_dim(),
                    x.rows(),
                    self.output_dim()
                ),
                format!(
                    "x {:?}, y {:?}, upstream {:?}",
                    x.shape(),
                    y.shape(),
                    upstream.shape()
                ),
            ));
        }
        let pre_grad = if self.activation == Activation::Identity {
            upstream.clone()
        } else {
            let act = self.activation;
            let mut g = upstream.clone();
            for (gv, &yv) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *gv *= act.derivative_from_output(yv);
            }
            g
        };

        let mut weight = Matrix::zeros(self.output_dim(), self.input_dim());
        gemm(1.0, &pre_grad, Trans::Yes, x, Trans::No, 0.0, &mut weight);
        let bias = pre_grad.col_sums();

        let input_grad = need_input_grad.then(|| {
            let mut gx = Matrix::zeros(x.rows(), self.input_dim());
            gemm(1.0, &pre_grad, Trans::No, &self.weight, Trans::No, 0.0, &mut gx);
            gx
        });
        Ok((DenseGrads { weight, bias }, input_grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference;

    #[test]
    fn identity_passthrough() {
        let layer = DenseLayer::new(Matrix::identity(2), vec![0.0; 2], Activation::Identity).unwrap();
        let y = layer.forward(&Matrix::from_rows(&[[3.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let layer = DenseLayer::new(Matrix::identity(2), vec![0.0; 2], Activation::Relu).unwrap();
        let y = layer.forward(&Matrix::from_rows(&[[-1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_one() {
        let layer = DenseLayer::new(
            Matrix::from_rows(&[[1.0, 1.0]]).unwrap(),
            vec![1.0],
            Activation::Sigmoid,
        )
        .unwrap();
        let y = layer.forward(&Matrix::zeros(1, 2)).unwrap();
        let want = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((y[(0, 0)] - want).abs() < 1e-15);
        assert!((want - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn forward_shape_error() {
        let layer = DenseLayer::zeros(3, 2, Activation::Relu);
        assert!(matches!(layer.forward(&Matrix::zeros(1, 2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_identity_returns_upstream() {
        let layer = DenseLayer::new(Matrix::identity(2), vec![0.0; 2], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.7]]).unwrap();
        let y = layer.forward(&x).unwrap();
        let up = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let (_, gx) = layer.backward(&x, &y, &up, true).unwrap();
        assert_eq!(gx.unwrap(), up);
    }

    #[test]
    fn backward_relu_gate() {
        let layer = DenseLayer::new(Matrix::identity(2), vec![0.0; 2], Activation::Relu).unwrap();
        let x = Matrix::from_rows(&[[-0.5, 2.0]]).unwrap();
        let y = layer.forward(&x).unwrap();
        let up = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let (g, gx) = layer.backward(&x, &y, &up, true).unwrap();
        assert_eq!(gx.unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(g.bias, vec![0.0, 1.0]);
    }

    #[test]
    fn backward_shape_error() {
        let layer = DenseLayer::zeros(2, 2, Activation::Relu);
        let x = Matrix::zeros(3, 2);
        let y = layer.forward(&x).unwrap();
        assert!(layer.backward(&x, &y, &Matrix::zeros(2, 2), true).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::Sigmoid, Activation::Identity, Activation::Relu] {
            let mut rng = RunRng::new(11);
            let mut layer = DenseLayer::glorot(4, 3, act, &mut rng);
            for b in &mut layer.bias {
                *b = rng.uniform_range(-0.5, 0.5);
            }
            let mut x = Matrix::zeros(5, 4);
            rng.fill_normal(x.as_mut_slice());
            let mut probe = Matrix::zeros(5, 3);
            rng.fill_normal(probe.as_mut_slice());

            // scalar loss: <probe, forward(x)>
            let loss = |layer: &DenseLayer, x: &Matrix| -> f64 {
                let y = layer.forward(x).unwrap();
                y.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
            };
            let y = layer.forward(&x).unwrap();
            let (g, gx) = layer.backward(&x, &y, &probe, true).unwrap();
            let gx = gx.unwrap();

            let h = 1e-6;
            for idx in 0..layer.weight.as_slice().len() {
                let num = central_difference(
                    |v| {
                        let mut l = layer.clone();
                        l.weight.as_mut_slice()[idx] = v;
                        loss(&l, &x)
                    },
                    layer.weight.as_slice()[idx],
                    h,
                );
                let ana = g.weight.as_slice()[idx];
                assert!((num - ana).abs() <= 1e-6 * ana.abs().max(1.0), "{act:?} W[{idx}] {num} vs {ana}");
            }
            for idx in 0..x.as_slice().len() {
                let num = central_difference(
                    |v| {
                        let mut xx = x.clone();
                        xx.as_mut_slice()[idx] = v;
                        loss(&layer, &xx)
                    },
                    x.as_slice()[idx],
                    h,
                );
                let ana = gx.as_slice()[idx];
                assert!((num - ana).abs() <= 1e-6 * ana.abs().max(1.0), "{act:?} x[{idx}] {num} vs {ana}");
            }
        }
    }

    #[test]
    fn forward_backward_is_bit_deterministic() {
        let mut rng = RunRng::new(5);
        let layer = DenseLayer::glorot(6, 4, Activation::Sigmoid, &mut rng);
        let mut x = Matrix::zeros(8, 6);
        rng.fill_normal(x.as_mut_slice());
        let run = || {
            let y = layer.forward(&x).unwrap();
            let (g, gx) = layer.backward(&x, &y, &y, true).unwrap();
            (y, g, gx)
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }
}
