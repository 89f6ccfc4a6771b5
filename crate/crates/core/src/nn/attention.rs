use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{join, softmax, softmax_backward, Module, Parameter};
use crate::error::{Error, Result};

/// Additive attention pooling over a sequence of states:
/// `u_j = tanh(W h_j + b)`, `α = softmax_j(u_jᵀ u_w)`, `s = Σ α_j h_j`.
#[derive(Debug, Clone)]
pub struct Attention {
    pub weight: Parameter,
    pub bias: Parameter,
    pub context: Parameter,
}

/// Intermediate values of one attention forward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub u: Array2<f64>,
    pub alpha: Array1<f64>,
}

impl Attention {
    /// `state_dim` is the size of each `h_j`; `attn_dim` the size of `u_j`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, attn_dim: usize, rng: &mut R) -> Self {
        Attention {
            weight: Parameter::glorot(attn_dim, state_dim, rng),
            bias: Parameter::zeros(&[attn_dim]),
            context: Parameter::glorot_vector(attn_dim, rng),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    /// `states` holds one state per row. Returns the pooled vector.
    pub fn forward(&self, states: ArrayView2<'_, f64>) -> Result<(Array1<f64>, AttentionCache)> {
        if states.nrows() == 0 {
            return Err(Error::Shape("attention over an empty sequence".into()));
        }
        if states.ncols() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                found: states.ncols(),
            });
        }
        let mut u = states.dot(&self.weight.mat().t());
        u += &self.bias.vec();
        u.mapv_inplace(f64::tanh);
        let scores = u.dot(&self.context.vec());
        let alpha = softmax(scores.view());
        let s = alpha.dot(&states);
        Ok((s, AttentionCache { u, alpha }))
    }

    /// Accumulates parameter gradients and returns `∂L/∂states`.
    pub fn backward(
        &mut self,
        states: ArrayView2<'_, f64>,
        cache: &AttentionCache,
        ds: ArrayView1<'_, f64>,
    ) -> Array2<f64> {
        let alpha = &cache.alpha;
        let mut dstates = outer(alpha.view(), ds);
        let dalpha = states.dot(&ds);
        let dscore = softmax_backward(alpha.view(), dalpha.view());
        if self.context.trainable {
            self.context.grad_vec().scaled_add(1.0, &cache.u.t().dot(&dscore));
        }
        let mut dz = outer(dscore.view(), self.context.vec());
        ndarray::Zip::from(&mut dz).and(&cache.u).for_each(|g, &u| *g *= 1.0 - u * u);
        if self.weight.trainable {
            self.weight.grad_mat().scaled_add(1.0, &dz.t().dot(&states));
        }
        if self.bias.trainable {
            self.bias.grad_vec().scaled_add(1.0, &dz.sum_axis(Axis(0)));
        }
        dstates += &dz.dot(&self.weight.mat());
        dstates
    }
}

pub(crate) fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

impl Module for Attention {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
        f(&join(prefix, "context"), &mut self.context);
    }
}
