use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{join, Activation, Module, Parameter};
use crate::error::{Error, Result};

/// A bank of `f` filters over windows of `k` consecutive word vectors.
/// Filter `i` sees the window flattened row by row (`k·m` values).
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Parameter,
    pub bias: Parameter,
    pub kernel: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    /// One flattened window per row, built from the padded input.
    pub windows: Array2<f64>,
    /// Activated feature maps, `filters x positions`.
    pub output: Array2<f64>,
    /// Row count of the unpadded input.
    pub input_rows: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        kernel: usize,
        filters: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Conv1d {
            weight: Parameter::glorot(filters, kernel * input_dim, rng),
            bias: Parameter::zeros(&[filters]),
            kernel,
            activation,
        }
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1] / self.kernel
    }

    /// `x` is `n x m` (one word per row). Inputs shorter than the kernel
    /// are padded with zero rows at the end. Output is `f x (n' − k + 1)`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ConvCache> {
        let m = self.input_dim();
        if x.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("convolution over an empty sentence".into()));
        }
        let k = self.kernel;
        let n = x.nrows().max(k);
        let positions = n - k + 1;
        let mut windows = Array2::zeros((positions, k * m));
        for p in 0..positions {
            let mut row = windows.row_mut(p);
            for j in 0..k {
                if p + j < x.nrows() {
                    row.slice_mut(s![j * m..(j + 1) * m]).assign(&x.row(p + j));
                }
            }
        }
        let mut z = windows.dot(&self.weight.mat().t());
        z += &self.bias.vec();
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        Ok(ConvCache {
            windows,
            output: z.reversed_axes(),
            input_rows: x.nrows(),
        })
    }

    /// Accumulates parameter gradients from `∂L/∂maps` (`f x P`) and
    /// returns `∂L/∂x` for the unpadded input.
    pub fn backward(&mut self, cache: &ConvCache, d_maps: ArrayView2<'_, f64>) -> Array2<f64> {
        let act = self.activation;
        // positions x filters
        let mut dz = d_maps.t().to_owned();
        ndarray::Zip::from(&mut dz)
            .and(cache.output.t())
            .for_each(|g, &y| *g *= act.derivative_from_output(y));
        if self.weight.trainable {
            self.weight.grad_mat().scaled_add(1.0, &dz.t().dot(&cache.windows));
        }
        if self.bias.trainable {
            self.bias.grad_vec().scaled_add(1.0, &dz.sum_axis(Axis(0)));
        }
        let dwin = dz.dot(&self.weight.mat());
        let (k, m) = (self.kernel, self.input_dim());
        let mut dx = Array2::zeros((cache.input_rows, m));
        for p in 0..dwin.nrows() {
            for j in 0..k {
                if p + j < cache.input_rows {
                    let mut target = dx.row_mut(p + j);
                    target += &dwin.slice(s![p, j * m..(j + 1) * m]);
                }
            }
        }
        dx
    }
}

impl Module for Conv1d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Argmax positions recorded by [`max_over_time`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPool {
    pub argmax: Vec<usize>,
    pub positions: usize,
}

/// Per-row maximum of `maps` (`f x P`). Ties go to the earliest position.
pub fn max_over_time(maps: ArrayView2<'_, f64>) -> (Array1<f64>, MaxPool) {
    let mut argmax = Vec::with_capacity(maps.nrows());
    let values = maps
        .rows()
        .into_iter()
        .map(|row| {
            let (mut best, mut at) = (f64::NEG_INFINITY, 0);
            for (i, &v) in row.iter().enumerate() {
                if v > best {
                    best = v;
                    at = i;
                }
            }
            argmax.push(at);
            best
        })
        .collect();
    (
        values,
        MaxPool {
            argmax,
            positions: maps.ncols(),
        },
    )
}

/// Routes each filter's gradient to its argmax position.
pub fn max_over_time_backward(pool: &MaxPool, d_max: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut d = Array2::zeros((pool.argmax.len(), pool.positions));
    for (i, &at) in pool.argmax.iter().enumerate() {
        d[[i, at]] = d_max[i];
    }
    d
}
