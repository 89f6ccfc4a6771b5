//! A small neural toolkit with hand-written backward passes.
//!
//! Layers are stateless with respect to activations: `forward` returns
//! whatever the matching `backward` needs, so a shared layer can be applied
//! many times per batch. Gradients accumulate into [`Parameter::grad`] until
//! [`zero_grad`] is called.

mod adam;
mod attention;
mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod gru;

use ndarray::{Array1, ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, IxDyn, Ix1, Ix2};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

pub use adam::Adam;
pub use attention::{Attention, AttentionCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TensorRecord};
pub use conv::{max_over_time, max_over_time_backward, Conv1d, ConvCache, MaxPool};
pub use dense::Dense;
pub use dropout::{dropout, Mask};
pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{BiGru, BiGruCache, GruCache, GruCell};

/// Dense real tensor, row-major.
pub type Tensor = ArrayD<f64>;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.raw_dim());
        Parameter {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(IxDyn(shape)))
    }

    /// Glorot-uniform matrix of shape `rows x cols`.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self::new(Tensor::from_shape_fn(IxDyn(&[rows, cols]), |_| dist.sample(rng)))
    }

    /// Glorot-uniform vector, treated as a `len x 1` matrix.
    pub fn glorot_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (len + 1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self::new(Tensor::from_shape_fn(IxDyn(&[len]), |_| dist.sample(rng)))
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn mat(&self) -> ArrayView2<'_, f64> {
        self.value.view().into_dimensionality::<Ix2>().expect("matrix parameter")
    }

    pub fn vec(&self) -> ArrayView1<'_, f64> {
        self.value.view().into_dimensionality::<Ix1>().expect("vector parameter")
    }

    pub fn mat_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.value.view_mut().into_dimensionality::<Ix2>().expect("matrix parameter")
    }

    pub fn grad_mat(&mut self) -> ArrayViewMut2<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix2>().expect("matrix parameter")
    }

    pub fn grad_vec(&mut self) -> ArrayViewMut1<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix1>().expect("vector parameter")
    }

    pub fn sq_norm(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum()
    }
}

/// Anything that owns parameters. `visit` must list them in a fixed order
/// with stable names.
pub trait Module {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zero_grad<M: Module + ?Sized>(m: &mut M) {
    m.visit("", &mut |_, p| p.grad.fill(0.0));
}

/// Sum of squared trainable values.
pub fn sq_norm_trainable<M: Module + ?Sized>(m: &mut M) -> f64 {
    let mut total = 0.0;
    m.visit("", &mut |_, p| {
        if p.trainable {
            total += p.sq_norm();
        }
    });
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(z: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// Gradient of a loss through softmax: given `p = softmax(z)` and `dp`,
/// returns `dz`.
pub fn softmax_backward(p: ArrayView1<'_, f64>, dp: ArrayView1<'_, f64>) -> Array1<f64> {
    let dot = p.dot(&dp);
    ndarray::Zip::from(p).and(dp).map_collect(|&pi, &gi| pi * (gi - dot))
}
