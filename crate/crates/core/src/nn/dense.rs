use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{join, Activation, Module, Parameter};
use crate::error::{Error, Result};

/// `y = act(W·x + b)` applied to each row of a batch.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        Dense {
            weight: Parameter::glorot(output, input, rng),
            bias: Parameter::zeros(&[output]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Rows of `x` are inputs; rows of the result are outputs.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let mut z = x.dot(&self.weight.mat().t());
        z += &self.bias.vec();
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        Ok(z)
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`. `y` is the
    /// forward output for `x`.
    pub fn backward(&mut self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let act = self.activation;
        let mut dz = dy.to_owned();
        ndarray::Zip::from(&mut dz).and(y).for_each(|g, &out| *g *= act.derivative_from_output(out));
        if self.weight.trainable {
            self.weight.grad_mat().scaled_add(1.0, &dz.t().dot(&x));
        }
        if self.bias.trainable {
            self.bias.grad_vec().scaled_add(1.0, &dz.sum_axis(Axis(0)));
        }
        dz.dot(&self.weight.mat())
    }
}

impl Module for Dense {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
